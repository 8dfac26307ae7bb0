#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace synthct {

enum class Truth { Real, Synthetic };
enum class Judgment : int { Synthetic = 0, Real = 1, Indeterminable = 2 };

std::string_view truth_name(Truth t) noexcept;           // "real" | "synthetic"
Truth parse_truth(std::string_view s);                    // MalformedInput otherwise
std::string_view judgment_name(Judgment j) noexcept;     // "synthetic" | "real" | "indeterminable"
/// Accepts the names above; throws MalformedInput otherwise.
Judgment parse_judgment(std::string_view s);
/// 0, 1 or 2; throws MalformedInput otherwise.
Judgment judgment_from_code(int code);

struct SurveyRecord {
  std::string survey_id;
  std::string rater_id;
  std::string item_id;
  Truth truth = Truth::Real;
  Judgment judgment = Judgment::Indeterminable;
  std::string rationale;
  std::string timestamp;

  bool correct() const noexcept {
    return (judgment == Judgment::Real && truth == Truth::Real) ||
           (judgment == Judgment::Synthetic && truth == Truth::Synthetic);
  }
};

inline constexpr std::array<std::string_view, 3> kAccuracyColumns{"Full scan set", "Real scans only",
                                                                  "Synthetic scans only"};

/// Percent correct, rounded to 0.1 half away from zero. Groupings with no
/// records are empty.
struct AccuracyBreakdown {
  double full = 0.0;
  std::optional<double> real_only;
  std::optional<double> synth_only;
  // Same, with indeterminable answers removed from the denominators.
  std::optional<double> full_excl;
  std::optional<double> real_only_excl;
  std::optional<double> synth_only_excl;
  std::size_t n_records = 0;
  std::size_t n_indeterminable = 0;
};

double round_to_tenth(double v) noexcept;

/// Indeterminable answers count as incorrect. Throws InvalidParameter on an
/// empty list.
AccuracyBreakdown accuracy_breakdown(std::span<const SurveyRecord> records);

enum class TableMode { Binomial, Multinomial };
std::string_view table_mode_name(TableMode m) noexcept;

struct ContingencyTable {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<std::uint64_t>> counts;  // rows x cols
};

/// Rows = {A, B}; columns = judgment codes {0, 1} (binomial, indeterminable
/// dropped) or {0, 1, 2}. All-zero columns are removed. Throws
/// InvalidParameter for an empty input list and DegenerateTable when a row is
/// empty after the drops or fewer than two columns remain.
ContingencyTable build_table(std::span<const SurveyRecord> a, std::span<const SurveyRecord> b, TableMode mode,
                             std::string label_a = "A", std::string label_b = "B");

struct ChiSquaredResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson's test of homogeneity. `yates` applies the continuity correction
/// to 2x2 tables only. Throws DegenerateTable for tables smaller than 2x2 or
/// any zero expected count.
ChiSquaredResult chi_squared_test(const ContingencyTable& t, bool yates = false);

/// Regularized upper incomplete gamma Q(a, x); series below x = a + 1,
/// continued fraction above.
double regularized_gamma_q(double a, double x);

/// One named survey and its records, e.g. {"Survey 1", ...}.
struct SurveyLog {
  std::string label;
  std::vector<SurveyRecord> records;
};

struct TestOutcome {
  std::string label;
  TableMode mode;
  std::optional<ChiSquaredResult> result;
  std::string error;  // set when the table was degenerate
};

/// Per survey: real vs synthetic. With two or more surveys also the pooled
/// real vs synthetic and every pairwise survey comparison, each in both
/// modes. Four surveys give the eleven comparisons of the published table.
std::vector<TestOutcome> survey_comparisons(std::span<const SurveyLog> logs, bool yates = false);

/// "Survey 2: real vs synthetic, binomial → 0.027"
std::string format_test_line(const TestOutcome& t);

/// {accuracy:{columns, surveys:[...]}, tests:[{label, mode, statistic, dof, p_value}], ...}
nlohmann::json survey_stats_json(std::span<const SurveyLog> logs, bool yates = false);

/// JSONL response lines joined with a truth map {"item_id": "real"|"synthetic"}.
/// Throws MalformedInput on bad lines or items missing from the truth map.
std::vector<SurveyRecord> read_response_log(const std::filesystem::path& log,
                                            const std::filesystem::path& truth);

}  // namespace synthct
