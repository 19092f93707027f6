#include "lnca/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lnca::inline LNCA_PRECISION {

std::vector<NamedStats> Module::norm_stats() {
    std::vector<NamedStats> out;
    for (auto& [name, s] : stats_) out.push_back({name, &s});
    return out;
}

std::int64_t Module::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.var.value().numel();
    return n;
}

void Module::set_trainable(bool on) {
    for (auto& p : params_) p.var.set_requires_grad(on);
}

void Module::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

namespace {

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
}

}  // namespace

std::uint64_t Module::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) fnv(h, p.var.value().ptr(), static_cast<std::size_t>(p.var.value().bytes()));
    for (const auto& [name, s] : stats_) {
        fnv(h, s.running_mean.ptr(), static_cast<std::size_t>(s.running_mean.bytes()));
        fnv(h, s.running_var.ptr(), static_cast<std::size_t>(s.running_var.bytes()));
    }
    return h;
}

Var Module::add_param(const std::string& name, Tensor init) {
    for (const auto& p : params_)
        if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
    params_.push_back({name, Var(std::move(init), true)});
    return params_.back().var;
}

BatchNormStats& Module::add_stats(const std::string& name) {
    stats_.emplace_back(name, BatchNormStats{});
    return stats_.back().second;
}

Var ConvLayer::operator()(const Var& x) const {
    return transposed ? conv_transpose2d(x, kernel, bias, stride) : conv2d(x, kernel, bias, stride, Padding::kZero);
}

Var NormLayer::operator()(const Var& x, Mode mode) const { return normalize(x, kind, scale, shift, stats, mode); }

ConvLayer LayerFactory::conv(Module& owner, const std::string& name, int k, std::int64_t cin, std::int64_t cout,
                             int stride, bool bias, Init init, bool transposed) {
    // Transposed kernels use the layout of the conv they transpose: [k,k,cout,cin].
    Tensor w(transposed ? Shape{k, k, cout, cin} : Shape{k, k, cin, cout});
    const double fan_in = double(k) * k * cin;
    const double sd = init == Init::kHe ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
    if (init != Init::kZero)
        for (real& v : w.data()) v = static_cast<real>(rng_.normal() * sd);
    ConvLayer layer;
    layer.kernel = owner.add_param(name + ".kernel", std::move(w));
    if (bias) layer.bias = owner.add_param(name + ".bias", Tensor(Shape{cout}));
    layer.stride = stride;
    layer.transposed = transposed;
    return layer;
}

NormLayer LayerFactory::norm(Module& owner, const std::string& name, NormKind kind, std::int64_t channels) {
    NormLayer n;
    n.kind = kind;
    n.scale = owner.add_param(name + ".scale", Tensor(Shape{channels}, real(1)));
    n.shift = owner.add_param(name + ".shift", Tensor(Shape{channels}));
    if (kind == NormKind::kBatch) n.stats = &owner.add_stats(name);
    return n;
}

}  // namespace lnca
