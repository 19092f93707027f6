#include "lnca/autoencoder.hpp"

#include <stdexcept>
#include <string>

namespace lnca::inline LNCA_PRECISION {

void AEConfig::validate() const {
    if (height < 1 || width < 1 || channels < 1) throw std::invalid_argument("AE input shape must be positive");
    if (downsample_stages < 0 || downsample_stages > 8) throw std::invalid_argument("AE downsample_stages out of range");
    const std::int64_t f = std::int64_t{1} << downsample_stages;
    if (height % f != 0 || width % f != 0)
        throw std::invalid_argument("AE input " + std::to_string(height) + "x" + std::to_string(width) +
                                    " not divisible by 2^" + std::to_string(downsample_stages));
    if (base_filters < 1 || latent_channels < 1 || skip_channels < 1)
        throw std::invalid_argument("AE channel counts must be positive");
}

AdjustedConvBlock AdjustedConvBlock::make(Module& owner, LayerFactory& f, const std::string& name, std::int64_t cin,
                                          std::int64_t filters, int stride, bool transposed, bool output_layer) {
    AdjustedConvBlock b;
    b.output_layer = output_layer;
    // Batch norm makes a conv bias redundant; output layers keep theirs.
    b.conv = f.conv(owner, name + ".conv", 3, cin, filters, stride, output_layer,
                    output_layer ? Init::kXavier : Init::kHe, transposed);
    if (!output_layer) b.norm = f.norm(owner, name + ".bn", NormKind::kBatch, filters);
    return b;
}

Var AdjustedConvBlock::operator()(const Var& x, Mode mode) const {
    const Var y = conv(x);
    if (output_layer) return activation(y, Activation::kSigmoid);
    return activation(norm(y, mode), Activation::kSwish);
}

Autoencoder::Autoencoder(const AEConfig& config) : config_(config) {
    config_.validate();
    LayerFactory f(config_.init_seed);
    const std::int64_t F = config_.base_filters;
    const int n = config_.downsample_stages;
    auto width_at = [&](int stage) { return F << stage; };

    stem_ = AdjustedConvBlock::make(*this, f, "enc.stem", config_.channels, F, 1, false, false);
    skip_proj_ = f.conv(*this, "enc.skip", 1, F, config_.skip_channels, 1, true, Init::kXavier);
    for (int s = 0; s < n; ++s)
        down_.push_back(AdjustedConvBlock::make(*this, f, "enc.down" + std::to_string(s), width_at(s),
                                                width_at(s + 1), 2, false, false));
    bottleneck_ =
        AdjustedConvBlock::make(*this, f, "enc.bottleneck", width_at(n), config_.latent_channels, 1, false, true);
    encoder_params_ = parameters().size();

    lift_ = AdjustedConvBlock::make(*this, f, "dec.lift", config_.latent_channels, width_at(n), 1, false, false);
    for (int s = n - 1; s >= 0; --s) {
        const std::int64_t out = s == 0 ? config_.skip_channels : width_at(s);
        up_.push_back(
            AdjustedConvBlock::make(*this, f, "dec.up" + std::to_string(s), width_at(s + 1), out, 2, true, false));
    }
    // With no downsampling stages the lift block feeds the skip merge directly.
    if (n == 0)
        up_.push_back(AdjustedConvBlock::make(*this, f, "dec.up0", width_at(0), config_.skip_channels, 1, false, false));
    out_ = AdjustedConvBlock::make(*this, f, "dec.out", config_.skip_channels, config_.channels, 1, false, true);
}

EncodeOutput Autoencoder::encode(const Var& image) const {
    const Shape want{image.dim(0), config_.height, config_.width, config_.channels};
    if (image.value().rank() != 4 || image.shape() != want)
        throw std::invalid_argument("encode: expected " + shape_str(want) + ", got " + shape_str(image.shape()));
    Var h = stem_(image, mode());
    EncodeOutput out;
    out.skip = skip_proj_(h);
    for (const auto& b : down_) h = b(h, mode());
    out.latent = bottleneck_(h, mode());
    return out;
}

Var Autoencoder::decode(const Var& latent, const Var& skip) const {
    const std::int64_t b = latent.dim(0);
    const Shape lat{b, config_.latent_height(), config_.latent_width(), config_.latent_channels};
    const Shape sk{b, config_.height, config_.width, config_.skip_channels};
    if (latent.value().rank() != 4 || latent.shape() != lat)
        throw std::invalid_argument("decode: latent expected " + shape_str(lat) + ", got " + shape_str(latent.shape()));
    if (skip.value().rank() != 4 || skip.shape() != sk)
        throw std::invalid_argument("decode: skip expected " + shape_str(sk) + ", got " + shape_str(skip.shape()));
    Var h = lift_(latent, mode());
    for (const auto& u : up_) h = u(h, mode());
    return out_(add(h, skip), mode());
}

Var Autoencoder::forward_bypass(const Var& image) const {
    const EncodeOutput e = encode(image);
    return decode(e.latent, e.skip);
}

std::int64_t Autoencoder::encoder_parameter_count() const {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < encoder_params_; ++i) n += parameters()[i].var.value().numel();
    return n;
}

std::int64_t Autoencoder::decoder_parameter_count() const { return parameter_count() - encoder_parameter_count(); }

}  // namespace lnca
