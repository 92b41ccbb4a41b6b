#ifndef SEPMAX_FILTER_BANK_HPP
#define SEPMAX_FILTER_BANK_HPP

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sepmax/dataset.hpp"
#include "sepmax/errors.hpp"
#include "sepmax/parallel.hpp"
#include "sepmax/patches.hpp"
#include "sepmax/separation.hpp"

namespace sepmax {

/// The learnable first layer: M filter parameter vectors with their biases,
/// plus the geometry and the standardization statistics they were trained
/// under. Immutable in spirit; treat instances as values.
struct FilterBank {
    std::size_t filter_count = 0;            // M
    std::size_t channels = 0;
    std::vector<std::vector<double>> theta;  // M vectors of length n_f
    std::vector<double> bias;                // M
    PatchConfig patch_config;
    std::optional<ChannelStats> channel_stats;

    std::size_t filter_dim() const { return patch_config.filter_dim(channels); }

    void validate() const {
        if (filter_count < 1) throw config_error("filter bank: M must be >= 1");
        if (theta.size() != filter_count || bias.size() != filter_count)
            throw config_error("filter bank: theta/bias count != M");
        const std::size_t n_f = filter_dim();
        for (const auto& t : theta)
            if (t.size() != n_f) throw config_error("filter bank: theta length != n_F");
    }
};

/// ReLU convolution forward pass over a prebuilt patch matrix. Feature maps
/// are laid out filter-major per pattern: all of filter 0's map, then
/// filter 1's, matching the per-filter column slicing of the LS steps.
inline FeatureSet forward(const FilterBank& bank, const PatchMatrix& pm,
                          std::vector<int> labels = {}, int class_count = 0) {
    bank.validate();
    const std::size_t n_f = bank.filter_dim();
    if (pm.n_f != n_f || pm.x.cols() != n_f + 1)
        throw config_error("forward: patch matrix has " + std::to_string(pm.n_f) +
                           " patch coordinates, bank expects " + std::to_string(n_f));
    if (pm.config.kernel_h != bank.patch_config.kernel_h ||
        pm.config.kernel_w != bank.patch_config.kernel_w ||
        pm.config.stride != bank.patch_config.stride ||
        pm.config.padding != bank.patch_config.padding)
        throw config_error("forward: patch matrix was built with a different patch config");
    if (!labels.empty() && labels.size() != pm.q_count)
        throw config_error("forward: label count != pattern count");

    FeatureSet feats;
    feats.filter_count = bank.filter_count;
    feats.map_size = pm.n;
    feats.labels = std::move(labels);
    feats.class_count = class_count;
    feats.values = Matrix(pm.q_count, bank.filter_count * pm.n);

    parallel_for(pm.q_count, [&](std::size_t q) {
        double* out = feats.values.row(q).data();
        for (std::size_t rho = 0; rho < pm.n; ++rho) {
            const double* xr = pm.x.row(q * pm.n + rho).data();
            for (std::size_t l = 0; l < bank.filter_count; ++l) {
                // bias column of ones
                const double acc = bank.bias[l] + detail::dot8(xr, bank.theta[l].data(), n_f);
                out[l * pm.n + rho] = acc > 0.0 ? acc : 0.0;
            }
        }
    });
    return feats;
}

inline constexpr int kFilterBankFormatVersion = 1;

/// Serialize to the versioned JSON schema. `provenance`, when given, is
/// stored alongside the schema fields (loaders ignore it).
inline void save(const FilterBank& bank, const std::string& path,
                 const nlohmann::json* provenance = nullptr) {
    bank.validate();
    nlohmann::json j;
    if (provenance) j["provenance"] = *provenance;
    j["format_version"] = kFilterBankFormatVersion;
    j["M"] = bank.filter_count;
    j["n_F"] = bank.filter_dim();
    j["kernel_h"] = bank.patch_config.kernel_h;
    j["kernel_w"] = bank.patch_config.kernel_w;
    j["stride"] = bank.patch_config.stride;
    j["padding"] = bank.patch_config.padding;
    j["channels"] = bank.channels;
    j["theta"] = bank.theta;
    j["bias"] = bank.bias;
    if (bank.channel_stats) {
        j["channel_stats"] = {{"mean", bank.channel_stats->mean},
                              {"stddev", bank.channel_stats->stddev}};
    } else {
        j["channel_stats"] = nullptr;
    }
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline FilterBank load_filter_bank(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("filter bank " + path + ": invalid JSON: " + e.what());
    }
    try {
        if (!j.contains("format_version") || j["format_version"].get<int>() != kFilterBankFormatVersion)
            throw data_error("filter bank " + path + ": unsupported or missing format_version");
        FilterBank bank;
        bank.filter_count = j.at("M").get<std::size_t>();
        bank.channels = j.at("channels").get<std::size_t>();
        bank.patch_config.kernel_h = j.at("kernel_h").get<std::size_t>();
        bank.patch_config.kernel_w = j.at("kernel_w").get<std::size_t>();
        bank.patch_config.stride = j.at("stride").get<std::size_t>();
        bank.patch_config.padding = j.at("padding").get<std::size_t>();
        bank.theta = j.at("theta").get<std::vector<std::vector<double>>>();
        bank.bias = j.at("bias").get<std::vector<double>>();
        const auto n_f = j.at("n_F").get<std::size_t>();
        if (n_f != bank.filter_dim())
            throw data_error("filter bank " + path + ": n_F inconsistent with geometry");
        if (!j.at("channel_stats").is_null()) {
            ChannelStats stats;
            stats.mean = j["channel_stats"].at("mean").get<std::vector<double>>();
            stats.stddev = j["channel_stats"].at("stddev").get<std::vector<double>>();
            bank.channel_stats = std::move(stats);
        }
        try {
            bank.validate();
        } catch (const config_error& e) {
            throw data_error("filter bank " + path + ": " + e.what());
        }
        return bank;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("filter bank " + path + ": missing or malformed field: " + e.what());
    }
}

} // namespace sepmax

#endif
