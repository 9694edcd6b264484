#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ebim {

// Study conditions: (i) original vs itself, (ii) vs BIM, (iii) vs EbIM.
enum class Condition { none = 0, bim = 1, ebim = 2 };
enum class Choice { identical, different };

const char* condition_name(Condition c) noexcept;  // "i", "ii", "iii"
std::optional<Condition> parse_condition(const std::string& s);
const char* choice_name(Choice c) noexcept;
std::optional<Choice> parse_choice(const std::string& s);

struct TrialRecord {
  std::string session_id;
  int trial_index = 0;
  std::string pair_id;
  Condition condition = Condition::none;
  bool original_left = true;
  Choice choice = Choice::identical;
  double latency_ms = 0.0;
  std::int64_t timestamp_ms = 0;
};

struct ParticipantSummary {
  std::string participant;
  // Fraction of "identical" answers per condition, indexed by Condition.
  std::array<std::optional<double>, 3> mean;
  std::array<int, 3> count{};
  bool complete() const { return mean[0] && mean[1] && mean[2]; }
};

// Sorted by participant id; rejects duplicate (session, trial index) pairs.
std::vector<ParticipantSummary> summarize(std::span<const TrialRecord> records);

// Direction of the alternative hypothesis for the location of the differences.
enum class Tail { greater, less };
const char* tail_name(Tail t) noexcept;

struct TestReport {
  std::string method;
  double statistic = 0.0;
  double p_value = 1.0;
  int n = 0;
  Tail tail = Tail::greater;
  double df = 0.0;        // t-tests only
  int zeros_dropped = 0;  // Wilcoxon only
};

// Upper tail P(T >= t) of Student's t with `df` degrees of freedom, via the
// regularized incomplete beta function.
double student_t_sf(double t, double df);
double normal_cdf(double z);
double normal_quantile(double p);

// d = a - b; t = mean(d) / (sd(d) / sqrt(n)), df = n - 1.
TestReport paired_t_one_tailed(std::span<const double> a, std::span<const double> b, Tail tail);
TestReport one_sample_t_one_tailed(std::span<const double> a, double mu0, Tail tail);

// Zero differences are dropped. Exact null distribution (midranks for ties)
// when n <= kWilcoxonExactMax, otherwise normal approximation with continuity
// and tie corrections.
inline constexpr int kWilcoxonExactMax = 20;
TestReport wilcoxon_signed_rank(std::span<const double> d, Tail tail);
TestReport wilcoxon_exact(std::span<const double> d, Tail tail);
TestReport wilcoxon_normal(std::span<const double> d, Tail tail);

// Royston's approximation (AS R94); 3 <= n <= 5000.
TestReport shapiro_wilk(std::span<const double> x);

// mean(a - b) / sd(a - b), sample standard deviation.
double cohens_d_paired(std::span<const double> a, std::span<const double> b);

// Normal approximation of the one-tailed paired t-test power:
// Phi(d * sqrt(n) - z_{1 - alpha}).
double t_power(double d, int n, double alpha);

inline constexpr double kStudyAlpha = 0.05;

struct BatteryCell {
  int hypothesis = 0;  // 1..5
  std::string method;  // "t-test" or "wilcoxon"
  bool paired = false;
  std::optional<TestReport> report;
  std::string degenerate;  // reason when no report could be computed
};

struct Battery {
  double alpha = kStudyAlpha;
  int participants = 0;
  std::vector<BatteryCell> cells;  // t-test row (hypotheses 1..5), then Wilcoxon row
  std::optional<TestReport> normality;  // Shapiro-Wilk on the hypothesis-1 differences
  std::optional<double> cohens_d;       // hypothesis 1
  std::optional<double> power;
};

// Hypotheses, with H0 first:
//   1  mu_BIM >= mu_EbIM    paired, d = EbIM - BIM, alternative greater
//   2  mu_BIM >= 0.5        one-sample, alternative less
//   3  mu_EbIM <= 0.5       one-sample, alternative greater
//   4  mu_BIM >= mu_NONE    paired, d = NONE - BIM, alternative greater
//   5  mu_EbIM >= mu_NONE   paired, d = NONE - EbIM, alternative greater
// Only complete participants are used; at least two are required.
Battery run_hypothesis_battery(std::span<const ParticipantSummary> summaries);

}  // namespace ebim
