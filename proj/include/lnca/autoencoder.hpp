#pragma once

#include <cstdint>
#include <vector>

#include "lnca/nn.hpp"

namespace lnca::inline LNCA_PRECISION {

struct AEConfig {
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::int64_t channels = 3;
    int downsample_stages = 2;
    std::int64_t base_filters = 32;
    std::int64_t latent_channels = 16;
    std::int64_t skip_channels = 16;
    std::uint64_t init_seed = 1;

    std::int64_t latent_height() const { return height >> downsample_stages; }
    std::int64_t latent_width() const { return width >> downsample_stages; }
    /// Throws std::invalid_argument on an inconsistent configuration.
    void validate() const;
};

struct EncodeOutput {
    Var latent;  // B x H/2^s x W/2^s x latent_channels, values in [0, 1]
    Var skip;    // B x H x W x skip_channels
};

/// conv3x3 -> batch norm -> swish, or conv3x3 + bias -> sigmoid for output
/// layers. The transposed variant upsamples with conv_transpose2d.
struct AdjustedConvBlock {
    ConvLayer conv;
    NormLayer norm;
    bool output_layer = false;

    static AdjustedConvBlock make(Module& owner, LayerFactory& f, const std::string& name, std::int64_t cin,
                                  std::int64_t filters, int stride, bool transposed, bool output_layer);
    Var operator()(const Var& x, Mode mode) const;
};

class Autoencoder : public Module {
   public:
    explicit Autoencoder(const AEConfig& config = {});

    const AEConfig& config() const { return config_; }

    EncodeOutput encode(const Var& image) const;
    Var decode(const Var& latent, const Var& skip) const;
    /// decode(encode(image)) with the NCA switched out.
    Var forward_bypass(const Var& image) const;

    std::int64_t encoder_parameter_count() const;
    std::int64_t decoder_parameter_count() const;

   private:
    AEConfig config_;
    AdjustedConvBlock stem_;
    ConvLayer skip_proj_;
    std::vector<AdjustedConvBlock> down_;
    AdjustedConvBlock bottleneck_;
    std::size_t encoder_params_ = 0;
    AdjustedConvBlock lift_;
    std::vector<AdjustedConvBlock> up_;
    AdjustedConvBlock out_;
};

}  // namespace lnca
