#include "lnca/config.hpp"

#include <fstream>

#include "config_schema.inc"
#include "lnca/version.hpp"

namespace lnca::inline LNCA_PRECISION {

using nlohmann::json;

const json& config_schema() {
    static const json schema = json::parse(kConfigSchemaText);
    return schema;
}

namespace {

bool type_matches(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "null") return v.is_null();
    return false;
}

void check(const json& v, const json& s, const json& root, const std::string& at, std::vector<std::string>& errs) {
    if (s.contains("$ref")) {
        const std::string ref = s["$ref"];
        if (ref.rfind("#/", 0) != 0) throw std::logic_error("unsupported schema $ref " + ref);
        return check(v, root.at(json::json_pointer(ref.substr(1))), root, at, errs);
    }
    const std::string where = at.empty() ? "/" : at;
    if (s.contains("type") && !type_matches(v, s["type"])) {
        errs.push_back(where + ": expected " + s["type"].get<std::string>());
        return;
    }
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"]) found |= e == v;
        if (!found) errs.push_back(where + ": value " + v.dump() + " not in " + s["enum"].dump());
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (s.contains("minimum") && x < s["minimum"].get<double>())
            errs.push_back(where + ": " + v.dump() + " < minimum " + s["minimum"].dump());
        if (s.contains("maximum") && x > s["maximum"].get<double>())
            errs.push_back(where + ": " + v.dump() + " > maximum " + s["maximum"].dump());
        if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
            errs.push_back(where + ": " + v.dump() + " <= exclusiveMinimum " + s["exclusiveMinimum"].dump());
        if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
            errs.push_back(where + ": " + v.dump() + " >= exclusiveMaximum " + s["exclusiveMaximum"].dump());
    }
    if (v.is_object()) {
        if (s.contains("required"))
            for (const auto& r : s["required"])
                if (!v.contains(r.get<std::string>())) errs.push_back(where + ": missing required '" + r.get<std::string>() + "'");
        const json props = s.value("properties", json::object());
        for (const auto& [key, val] : v.items()) {
            if (props.contains(key))
                check(val, props[key], root, at + "/" + key, errs);
            else if (s.contains("additionalProperties") && s["additionalProperties"] == false)
                errs.push_back(where + ": unknown property '" + key + "'");
        }
    }
    if (v.is_array() && s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], root, at + "/" + std::to_string(i), errs);
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

TrainConfig train_from_json(const json& j, TrainConfig t) {
    get(j, "epochs", t.epochs);
    get(j, "batch_size", t.batch_size);
    get(j, "lr", t.adam.lr);
    get(j, "beta1", t.adam.beta1);
    get(j, "beta2", t.adam.beta2);
    get(j, "eps", t.adam.eps);
    get(j, "min_lr", t.min_lr);
    get(j, "seed", t.seed);
    if (j.contains("corruption")) {
        const json& c = j["corruption"];
        if (c.contains("kind")) t.corruption.kind = parse_corruption_kind(c["kind"].get<std::string>());
        get(c, "severity", t.corruption.severity);
    }
    if (j.contains("curriculum")) {
        const json& c = j["curriculum"];
        get(c, "enabled", t.curriculum);
        get(c, "min_severity", t.min_severity);
        get(c, "max_severity", t.max_severity);
    }
    get(j, "min_steps", t.min_steps);
    get(j, "max_steps", t.max_steps);
    get(j, "eval_steps", t.eval_steps);
    get(j, "pool_size", t.pool_size);
    get(j, "val_every", t.val_every);
    return t;
}

json train_to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"lr", t.adam.lr},
            {"beta1", t.adam.beta1},
            {"beta2", t.adam.beta2},
            {"eps", t.adam.eps},
            {"min_lr", t.min_lr},
            {"seed", t.seed},
            {"corruption", {{"kind", std::string(to_string(t.corruption.kind))}, {"severity", t.corruption.severity}}},
            {"curriculum", {{"enabled", t.curriculum}, {"min_severity", t.min_severity}, {"max_severity", t.max_severity}}},
            {"min_steps", t.min_steps},
            {"max_steps", t.max_steps},
            {"eval_steps", t.eval_steps},
            {"pool_size", t.pool_size},
            {"val_every", t.val_every}};
}

}  // namespace

std::vector<std::string> schema_errors(const json& doc, const json& schema) {
    std::vector<std::string> errs;
    check(doc, schema, schema, "", errs);
    return errs;
}

json model_to_json(const ModelConfig& m) {
    const AEConfig& a = m.ae;
    const TransitionConfig& t = m.transition;
    return {{"model", std::string(to_string(m.kind))},
            {"autoencoder",
             {{"height", a.height},
              {"width", a.width},
              {"channels", a.channels},
              {"downsample_stages", a.downsample_stages},
              {"base_filters", a.base_filters},
              {"latent_channels", a.latent_channels},
              {"skip_channels", a.skip_channels},
              {"init_seed", a.init_seed}}},
            {"transition",
             {{"hidden_channels", t.hidden_channels},
              {"embed_dim", t.embed_dim},
              {"heads", t.heads},
              {"mlp_hidden", t.mlp_hidden},
              {"positional_encoding", t.positional_encoding},
              {"perception_width", t.perception_width},
              {"update_width", t.update_width},
              {"dropout_keep", t.dropout_keep},
              {"update_probability", t.update_probability},
              {"zero_init_head", t.zero_init_head},
              {"init_seed", t.init_seed}}}};
}

ModelConfig model_from_json(const json& doc) {
    ModelConfig m;
    if (doc.contains("model")) m.kind = parse_model_kind(doc["model"].get<std::string>());
    if (doc.contains("autoencoder")) {
        const json& a = doc["autoencoder"];
        get(a, "height", m.ae.height);
        get(a, "width", m.ae.width);
        get(a, "channels", m.ae.channels);
        get(a, "downsample_stages", m.ae.downsample_stages);
        get(a, "base_filters", m.ae.base_filters);
        get(a, "latent_channels", m.ae.latent_channels);
        get(a, "skip_channels", m.ae.skip_channels);
        get(a, "init_seed", m.ae.init_seed);
    }
    if (doc.contains("transition")) {
        const json& t = doc["transition"];
        get(t, "hidden_channels", m.transition.hidden_channels);
        get(t, "embed_dim", m.transition.embed_dim);
        get(t, "heads", m.transition.heads);
        get(t, "mlp_hidden", m.transition.mlp_hidden);
        get(t, "positional_encoding", m.transition.positional_encoding);
        get(t, "perception_width", m.transition.perception_width);
        get(t, "update_width", m.transition.update_width);
        get(t, "dropout_keep", m.transition.dropout_keep);
        get(t, "update_probability", m.transition.update_probability);
        get(t, "zero_init_head", m.transition.zero_init_head);
        get(t, "init_seed", m.transition.init_seed);
    }
    return m;
}

RunConfig parse_config(const json& doc) {
    const auto errs = schema_errors(doc, config_schema());
    if (!errs.empty()) {
        std::string msg = "config does not match schema: " + errs.front();
        if (errs.size() > 1) msg += " (+" + std::to_string(errs.size() - 1) + " more)";
        throw ConfigError(msg);
    }
    RunConfig c;
    try {
        c.model = model_from_json(doc);
        if (doc.contains("data")) {
            const json& d = doc["data"];
            get(d, "train_dir", c.data.train_dir);
            get(d, "val_dir", c.data.val_dir);
            get(d, "eval_severity", c.data.eval_severity);
            get(d, "eval_seed", c.data.eval_seed);
        }
        if (doc.contains("train_ae")) c.train_ae = train_from_json(doc["train_ae"], c.train_ae);
        if (doc.contains("train_nca")) c.train_nca = train_from_json(doc["train_nca"], c.train_nca);
        if (doc.contains("loss_weights")) {
            const json& w = doc["loss_weights"];
            get(w, "w_rec_ae", c.weights.w_rec_ae);
            get(w, "w_dist", c.weights.w_dist);
            get(w, "w_task", c.weights.w_task);
            get(w, "w_eq", c.weights.w_eq);
            get(w, "w_rec_nca", c.weights.w_rec_nca);
            get(w, "w_lat", c.weights.w_lat);
            get(w, "w_over", c.weights.w_over);
            get(w, "margin_alpha", c.weights.margin_alpha);
            get(w, "eq_noise_var", c.weights.eq_noise_var);
        }
        if (doc.contains("bench")) {
            const json& b = doc["bench"];
            get(b, "resolutions", c.bench.resolutions);
            get(b, "batches", c.bench.batches);
            get(b, "train_steps", c.bench.train_steps);
            get(b, "inference_steps", c.bench.inference_steps);
            get(b, "repeats", c.bench.repeats);
            get(b, "byte_budget", c.bench.byte_budget);
            if (b.contains("models")) {
                c.bench.models.clear();
                for (const auto& m : b["models"]) c.bench.models.push_back(parse_model_kind(m.get<std::string>()));
            }
        }
        // Semantic checks beyond the schema.
        c.model.ae.validate();
        resolved(c.model).transition.validate();
        c.train_ae.validate();
        c.train_nca.validate();
        c.weights.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

json to_json(const RunConfig& c) {
    json doc = model_to_json(c.model);
    doc["schema_version"] = kSchemaVersion;
    doc["data"] = {{"train_dir", c.data.train_dir},
                   {"val_dir", c.data.val_dir},
                   {"eval_severity", c.data.eval_severity},
                   {"eval_seed", c.data.eval_seed}};
    doc["train_ae"] = train_to_json(c.train_ae);
    doc["train_nca"] = train_to_json(c.train_nca);
    const LossWeights& w = c.weights;
    doc["loss_weights"] = {{"w_rec_ae", w.w_rec_ae}, {"w_dist", w.w_dist},       {"w_task", w.w_task},
                           {"w_eq", w.w_eq},         {"w_rec_nca", w.w_rec_nca}, {"w_lat", w.w_lat},
                           {"w_over", w.w_over},     {"margin_alpha", w.margin_alpha}, {"eq_noise_var", w.eq_noise_var}};
    json models = json::array();
    for (ModelKind k : c.bench.models) models.push_back(std::string(to_string(k)));
    doc["bench"] = {{"resolutions", c.bench.resolutions}, {"batches", c.bench.batches},
                    {"train_steps", c.bench.train_steps}, {"inference_steps", c.bench.inference_steps},
                    {"repeats", c.bench.repeats},         {"byte_budget", c.bench.byte_budget},
                    {"models", models}};
    return doc;
}

}  // namespace lnca
