#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mikani/core.hpp"
#include "mikani/text.hpp"

namespace mikani::ensemble {

enum class Kernel { rbf, linear };

struct SvrConfig {
    double C = 10.0;
    double epsilon = 0.1;
    Kernel kernel = Kernel::rbf;
    std::optional<double> gamma;  ///< nullopt = auto: 1 / (d * var(X))
    double weight_zero = 0.01;    ///< weight of samples whose target is exactly 0
    double weight_pos = 100.0;
    double tolerance = 1e-3;
    std::size_t max_iterations = 10'000'000;

    void validate() const;
};

std::string_view kernel_name(Kernel k);
Kernel parse_kernel(std::string_view name);

using Matrix = std::vector<std::vector<double>>;

struct SvrModel {
    Kernel kernel = Kernel::rbf;
    double gamma = 0.0;
    std::size_t dim = 0;             ///< feature dimension stamp
    Matrix support_vectors;
    std::vector<double> dual_coef;   ///< alpha_i - alpha_i^*, one per support vector
    double bias = 0.0;
    SvrConfig config;                ///< echo of the training configuration

    /// Raw kernel expansion (not clamped).
    double decision(const std::vector<double>& x) const;
};

struct SvrTrainReport {
    std::size_t iterations = 0;
    double kkt_gap = 0.0;        ///< max violating pair gap at exit
    double dual_objective = 0.0; ///< 1/2 b'Qb + p'b over the 2n dual variables
    std::vector<double> alpha;   ///< 2n dual variables: alpha then alpha^*
    std::vector<double> upper;   ///< per-variable box bound C * w_i
};

/// Weighted epsilon-SVR via SMO with second-order working-set selection.
/// Throws ValidationError on malformed input and ConvergenceError when the
/// KKT gap is still above tolerance after max_iterations.
SvrModel svr_train(const Matrix& rows, const std::vector<double>& targets, const SvrConfig& config,
                   SvrTrainReport* report = nullptr);

/// Same, with explicit per-sample weights instead of the zero/positive rule.
SvrModel svr_train_weighted(const Matrix& rows, const std::vector<double>& targets,
                            const std::vector<double>& weights, const SvrConfig& config,
                            SvrTrainReport* report = nullptr);

/// weight_zero for target == 0, weight_pos otherwise.
std::vector<double> sample_weights(const std::vector<double>& targets, const SvrConfig& config);

/// Kernel expansion clamped to [0,1]. Throws ValidationError on a dimension mismatch.
std::vector<double> svr_predict(const SvrModel& model, const Matrix& rows);
std::vector<double> svr_predict_raw(const SvrModel& model, const Matrix& rows);

inline constexpr std::string_view kModelFormat = "mikani-svr";
inline constexpr int kModelVersion = 1;

nlohmann::json model_to_json(const SvrModel& model);
SvrModel model_from_json(const nlohmann::json& doc);
void save_model(const SvrModel& model, const std::filesystem::path& path);
SvrModel load_model(const std::filesystem::path& path);

// --- span post-processing ---------------------------------------------------

struct MergePolicy {
    std::size_t max_word_gap = 3;  ///< merge only when the word-index gap is below this
    double max_prob_diff = 0.15;
    double hard_threshold = 0.5;

    void validate() const;
};

struct ScoredToken {
    std::size_t word_index = 0;  ///< position of the containing word in the answer
    text::CharRange span;
    double prob = 0.0;
};

/// A merged span with the word range it covers.
struct MergedSpan {
    std::size_t first_word = 0;
    std::size_t last_word = 0;
    text::CharRange span;
    double prob = 0.0;
    friend bool operator==(const MergedSpan&, const MergedSpan&) = default;
};

/// Greedy left-to-right merging of positive-probability tokens, repeated
/// until nothing changes. Two neighbours merge when next.first_word -
/// current.last_word < max_word_gap and |prob difference| <= max_prob_diff;
/// the merged span covers both plus the gap and keeps the larger probability.
std::vector<MergedSpan> merge_tokens(const std::vector<ScoredToken>& tokens, const MergePolicy& policy);
std::vector<MergedSpan> merge_spans(const std::vector<MergedSpan>& spans, const MergePolicy& policy);
std::vector<SoftSpan> to_soft(const std::vector<MergedSpan>& spans);

/// Spans with prob strictly above the threshold.
std::vector<HardSpan> to_hard(const std::vector<SoftSpan>& soft, const MergePolicy& policy);

}  // namespace mikani::ensemble
