#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mipic/config.hpp"

namespace mipic {

struct GradcheckOptions {
    std::size_t batch_size = 3;
    std::size_t max_tokens = 6;  // contextual tokens in the longest sentence
    double step = 1e-4;
    double tolerance = 1e-4;
    /// Denominator floor of the relative error.
    double floor = 1e-6;
    std::uint64_t seed = 0;
    std::size_t max_parameters = 20000;
};

struct TermCheck {
    std::string term;
    double worst_relative = 0.0;
    double worst_absolute = 0.0;
    std::string worst_parameter;  // "name[r,c]"
    double analytic = 0.0;        // at the worst entry
    double numeric = 0.0;
    std::size_t entries = 0;
    bool passed = true;
};

struct GradcheckReport {
    std::size_t parameter_count = 0;
    std::vector<TermCheck> terms;
    double seconds = 0.0;

    bool passed() const;
    /// First failing term, or nullptr.
    const TermCheck* first_failure() const;
};

void to_json(nlohmann::json& j, const TermCheck& t);
void to_json(nlohmann::json& j, const GradcheckReport& r);

/// Central finite differences against reverse-mode gradients for every
/// parameter and every loss term (L_MRL, L_att, L_CKA, L_SIA, L_PIC, L_MIPIC).
/// Teacher quantities and dropout masks are held fixed across evaluations.
/// Throws ConfigError when the model exceeds options.max_parameters.
GradcheckReport run_gradcheck(const ModelConfig& config, const GradcheckOptions& options = {});

}  // namespace mipic
