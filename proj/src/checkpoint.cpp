#include "lnca/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "lnca/config.hpp"
#include "lnca/version.hpp"

namespace lnca::inline LNCA_PRECISION {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'L', 'N', 'C', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void put_raw(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get_raw(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

// Tensors of one section in checkpoint order: parameters, then norm statistics.
std::vector<std::pair<std::string, Tensor*>> tensors_of(Module& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (const auto& p : m.parameters()) out.emplace_back(p.name, &const_cast<Var&>(p.var).mutable_value());
    for (auto& s : m.norm_stats()) {
        out.emplace_back(s.name + ".running_mean", &s.stats->running_mean);
        out.emplace_back(s.name + ".running_var", &s.stats->running_var);
    }
    return out;
}

struct Section {
    json entries = json::array();
    json norm_initialized = json::object();
};

Section describe(Module& m, std::uint64_t& offset, std::vector<const Tensor*>& order) {
    Section s;
    for (auto& [name, t] : tensors_of(m)) {
        if (t->empty()) continue;  // statistics not yet initialised
        const auto nbytes = static_cast<std::uint64_t>(t->numel()) * sizeof(real);
        s.entries.push_back({{"name", name}, {"shape", t->shape()}, {"dtype", kRealName}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
        order.push_back(t);
    }
    for (auto& st : m.norm_stats()) s.norm_initialized[st.name] = st.stats->initialized;
    return s;
}

struct Loaded {
    json header;
    std::vector<char> data;
};

Loaded read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint not found: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("not a checkpoint file: " + path.string());
    const auto format = get_raw<std::uint32_t>(in);
    if (format != kCheckpointFormat)
        throw CheckpointError("unsupported checkpoint format " + std::to_string(format) + " in " + path.string());
    const auto hlen = get_raw<std::uint64_t>(in);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw CheckpointError("truncated checkpoint header in " + path.string());
    Loaded l;
    try {
        l.header = json::parse(htext);
    } catch (const json::parse_error& e) {
        throw CheckpointError("corrupt checkpoint header in " + path.string());
    }
    l.data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return l;
}

void fill_section(Module& m, const json& section, const std::vector<char>& data, const std::string& what) {
    std::map<std::string, json> by_name;
    for (const auto& e : section.at("entries")) by_name[e.at("name").get<std::string>()] = e;
    for (auto& [name, t] : tensors_of(m)) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            // Statistics that were never initialised may be absent.
            if (name.ends_with(".running_mean") || name.ends_with(".running_var")) continue;
            throw CheckpointError(what + " section lacks tensor " + name);
        }
        const json& e = it->second;
        const Shape shape = e.at("shape").get<Shape>();
        if (!t->empty() && shape != t->shape())
            throw CheckpointError("shape mismatch for " + name + ": checkpoint " + shape_str(shape) + ", model " +
                                  shape_str(t->shape()));
        const std::string dtype = e.at("dtype");
        const auto offset = e.at("offset").get<std::uint64_t>();
        const auto nbytes = e.at("nbytes").get<std::uint64_t>();
        const std::size_t elem = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
        if (elem == 0) throw CheckpointError("unknown dtype " + dtype + " for " + name);
        const auto n = static_cast<std::uint64_t>(shape_numel(shape));
        if (nbytes != n * elem || offset + nbytes > data.size())
            throw CheckpointError("tensor " + name + " exceeds checkpoint data");
        Tensor out(shape);
        for (std::uint64_t i = 0; i < n; ++i) {
            const char* src = data.data() + offset + i * elem;
            if (elem == 8) {
                std::uint64_t bits;
                std::memcpy(&bits, src, 8);
                out[static_cast<std::int64_t>(i)] = static_cast<real>(std::bit_cast<double>(bits));
            } else {
                std::uint32_t bits;
                std::memcpy(&bits, src, 4);
                out[static_cast<std::int64_t>(i)] = static_cast<real>(std::bit_cast<float>(bits));
            }
        }
        *t = std::move(out);
    }
    const json init = section.value("norm_initialized", json::object());
    for (auto& s : m.norm_stats()) s.stats->initialized = init.value(s.name, false) && !s.stats->running_mean.empty();
}

}  // namespace

void save_checkpoint(const fs::path& path, const RestorationModel& model, const json& extra) {
    auto& m = const_cast<RestorationModel&>(model);
    std::uint64_t offset = 0;
    std::vector<const Tensor*> order;
    json header;
    header["schema_version"] = kSchemaVersion;
    header["format_version"] = kCheckpointFormat;
    header["config"] = model_to_json(model.config());
    header["run"] = extra;
    json sections = json::object();
    if (Autoencoder* ae = m.autoencoder()) {
        const Section s = describe(*ae, offset, order);
        sections["autoencoder"] = {{"entries", s.entries}, {"norm_initialized", s.norm_initialized}};
    }
    const Section t = describe(m.transition(), offset, order);
    sections["transition"] = {{"entries", t.entries}, {"norm_initialized", t.norm_initialized}};
    header["sections"] = sections;

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot create " + tmp.string());
        const std::string htext = header.dump();
        out.write(kMagic, 8);
        put_raw<std::uint32_t>(out, kCheckpointFormat);
        put_raw<std::uint64_t>(out, htext.size());
        out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
        for (const Tensor* tn : order)
            for (real v : tn->data()) {
                if constexpr (sizeof(real) == 8)
                    put_raw(out, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
                else
                    put_raw(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            }
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

json read_checkpoint_header(const fs::path& path) { return read_all(path).header; }

std::unique_ptr<RestorationModel> load_checkpoint(const fs::path& path) {
    const Loaded l = read_all(path);
    auto model = std::make_unique<RestorationModel>(model_from_json(l.header.at("config")));
    const json& sections = l.header.at("sections");
    if (Autoencoder* ae = model->autoencoder()) {
        if (!sections.contains("autoencoder")) throw CheckpointError("checkpoint has no autoencoder section");
        fill_section(*ae, sections["autoencoder"], l.data, "autoencoder");
    }
    fill_section(model->transition(), sections.at("transition"), l.data, "transition");
    return model;
}

void load_autoencoder(const fs::path& path, RestorationModel& model) {
    const Loaded l = read_all(path);
    Autoencoder* ae = model.autoencoder();
    if (!ae) throw CheckpointError("model " + std::string(to_string(model.kind())) + " has no autoencoder");
    const ModelConfig stored = model_from_json(l.header.at("config"));
    if (model_to_json(ModelConfig{model.kind(), stored.ae, {}})["autoencoder"] !=
        model_to_json(ModelConfig{model.kind(), model.config().ae, {}})["autoencoder"])
        throw CheckpointError("autoencoder config in " + path.string() + " differs from the requested model");
    if (!l.header.at("sections").contains("autoencoder"))
        throw CheckpointError("checkpoint " + path.string() + " has no autoencoder section");
    fill_section(*ae, l.header["sections"]["autoencoder"], l.data, "autoencoder");
}

}  // namespace lnca
