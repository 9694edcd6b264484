#include "ebim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "ebim/error.hpp"

namespace ebim {

const char* condition_name(Condition c) noexcept {
  switch (c) {
    case Condition::none: return "i";
    case Condition::bim: return "ii";
    case Condition::ebim: return "iii";
  }
  return "?";
}

std::optional<Condition> parse_condition(const std::string& s) {
  if (s == "i") return Condition::none;
  if (s == "ii") return Condition::bim;
  if (s == "iii") return Condition::ebim;
  return std::nullopt;
}

const char* choice_name(Choice c) noexcept { return c == Choice::identical ? "identical" : "different"; }

std::optional<Choice> parse_choice(const std::string& s) {
  if (s == "identical") return Choice::identical;
  if (s == "different") return Choice::different;
  return std::nullopt;
}

const char* tail_name(Tail t) noexcept { return t == Tail::greater ? "greater" : "less"; }

std::vector<ParticipantSummary> summarize(std::span<const TrialRecord> records) {
  std::set<std::pair<std::string, int>> seen;
  std::map<std::string, std::array<std::pair<int, int>, 3>> tally;  // (identical, total)
  for (const TrialRecord& r : records) {
    if (!seen.emplace(r.session_id, r.trial_index).second) {
      throw Error(Errc::conflict, "duplicate record for session " + r.session_id + ", trial " +
                                      std::to_string(r.trial_index));
    }
    auto& cell = tally[r.session_id][std::size_t(r.condition)];
    cell.first += r.choice == Choice::identical;
    cell.second += 1;
  }
  std::vector<ParticipantSummary> out;
  out.reserve(tally.size());
  for (const auto& [id, cells] : tally) {
    ParticipantSummary s;
    s.participant = id;
    for (std::size_t c = 0; c < 3; ++c) {
      s.count[c] = cells[c].second;
      if (cells[c].second > 0) s.mean[c] = double(cells[c].first) / double(cells[c].second);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- distributions ---------------------------------------------------------

double normal_cdf(double z) { return 0.5 * boost::math::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::invalid_argument, "normal quantile needs p in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw Error(Errc::invalid_argument, "degrees of freedom must be > 0");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  // P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)
  const double x = df / (df + t * t);
  const double two_sided = boost::math::ibeta(df / 2.0, 0.5, x);
  return t >= 0.0 ? 0.5 * two_sided : 1.0 - 0.5 * two_sided;
}

// ---- t-tests ---------------------------------------------------------------

namespace {

struct MeanSd {
  double mean;
  double sd;
};

MeanSd mean_sd(std::span<const double> d) {
  if (std::adjacent_find(d.begin(), d.end(), std::not_equal_to<>()) == d.end()) return {d.front(), 0.0};
  const double n = double(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

TestReport t_test(std::span<const double> d, Tail tail, std::string method) {
  if (d.size() < 2) throw Error(Errc::invalid_argument, "t-test needs n >= 2");
  const MeanSd ms = mean_sd(d);
  if (!(ms.sd > 0.0)) throw Error(Errc::degenerate, "zero-variance differences: t statistic undefined");
  const double n = double(d.size());
  TestReport r;
  r.method = std::move(method);
  r.n = int(d.size());
  r.tail = tail;
  r.df = n - 1.0;
  r.statistic = ms.mean / (ms.sd / std::sqrt(n));
  const double oriented = tail == Tail::greater ? r.statistic : -r.statistic;
  r.p_value = std::clamp(student_t_sf(oriented, r.df), 0.0, 1.0);
  return r;
}

std::vector<double> differences(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::shape_mismatch, "paired samples differ in length");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

}  // namespace

TestReport paired_t_one_tailed(std::span<const double> a, std::span<const double> b, Tail tail) {
  return t_test(differences(a, b), tail, "paired-t");
}

TestReport one_sample_t_one_tailed(std::span<const double> a, double mu0, Tail tail) {
  std::vector<double> d(a.begin(), a.end());
  for (double& v : d) v -= mu0;
  return t_test(d, tail, "one-sample-t");
}

// ---- Wilcoxon signed rank ----------------------------------------------------

namespace {

struct SignedRanks {
  std::vector<int> doubled_ranks;  // 2 * midrank, always an integer
  std::vector<bool> positive;
  int zeros = 0;
  double tie_term = 0.0;  // sum of (t^3 - t) over tie groups
};

SignedRanks signed_ranks(std::span<const double> d) {
  SignedRanks s;
  std::vector<double> nz;
  for (double v : d) {
    if (v == 0.0) {
      ++s.zeros;
    } else {
      nz.push_back(v);
    }
  }
  if (nz.empty()) throw Error(Errc::degenerate, "all differences are zero");
  std::vector<std::size_t> order(nz.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(nz[i]) < std::abs(nz[j]); });
  s.doubled_ranks.assign(nz.size(), 0);
  s.positive.assign(nz.size(), false);
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
    const int doubled = int(i + 1 + j + 1);  // (first + last) rank, i.e. twice the midrank
    const double t = double(j - i + 1);
    s.tie_term += t * t * t - t;
    for (std::size_t k = i; k <= j; ++k) s.doubled_ranks[order[k]] = doubled;
    i = j + 1;
  }
  for (std::size_t i = 0; i < nz.size(); ++i) s.positive[i] = nz[i] > 0.0;
  return s;
}

int doubled_w_plus(const SignedRanks& s) {
  int w = 0;
  for (std::size_t i = 0; i < s.positive.size(); ++i) w += s.positive[i] ? s.doubled_ranks[i] : 0;
  return w;
}

}  // namespace

TestReport wilcoxon_exact(std::span<const double> d, Tail tail) {
  const SignedRanks s = signed_ranks(d);
  const int n = int(s.doubled_ranks.size());
  if (n > 30) throw Error(Errc::invalid_argument, "exact Wilcoxon limited to n <= 30");
  // counts[k] = number of sign assignments whose doubled positive-rank sum is k
  const int total = std::accumulate(s.doubled_ranks.begin(), s.doubled_ranks.end(), 0);
  std::vector<double> counts(std::size_t(total) + 1, 0.0);
  counts[0] = 1.0;
  int reach = 0;
  for (int r : s.doubled_ranks) {
    for (int k = reach; k >= 0; --k) counts[std::size_t(k + r)] += counts[std::size_t(k)];
    reach += r;
  }
  const int observed = doubled_w_plus(s);
  double tail_count = 0.0;
  if (tail == Tail::greater) {
    for (int k = observed; k <= total; ++k) tail_count += counts[std::size_t(k)];
  } else {
    for (int k = 0; k <= observed; ++k) tail_count += counts[std::size_t(k)];
  }
  TestReport r;
  r.method = "wilcoxon-exact";
  r.statistic = observed / 2.0;
  r.p_value = std::clamp(std::ldexp(tail_count, -n), 0.0, 1.0);
  r.n = n;
  r.tail = tail;
  r.zeros_dropped = s.zeros;
  return r;
}

TestReport wilcoxon_normal(std::span<const double> d, Tail tail) {
  const SignedRanks s = signed_ranks(d);
  const double n = double(s.doubled_ranks.size());
  const double w = doubled_w_plus(s) / 2.0;
  const double mu = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - s.tie_term / 48.0;
  TestReport r;
  r.method = "wilcoxon-normal";
  r.statistic = w;
  r.n = int(n);
  r.tail = tail;
  r.zeros_dropped = s.zeros;
  if (!(var > 0.0)) throw Error(Errc::degenerate, "Wilcoxon variance is zero");
  const double sigma = std::sqrt(var);
  r.p_value = tail == Tail::greater ? normal_cdf((mu - w + 0.5) / sigma) : normal_cdf((w - mu + 0.5) / sigma);
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  return r;
}

TestReport wilcoxon_signed_rank(std::span<const double> d, Tail tail) {
  const auto nonzero = std::count_if(d.begin(), d.end(), [](double v) { return v != 0.0; });
  return nonzero <= kWilcoxonExactMax ? wilcoxon_exact(d, tail) : wilcoxon_normal(d, tail);
}

// ---- Shapiro-Wilk --------------------------------------------------------------

namespace {

double poly(std::span<const double> c, double x) {
  double r = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
  return r;
}

}  // namespace

TestReport shapiro_wilk(std::span<const double> x_in) {
  const int n = int(x_in.size());
  if (n < 3 || n > 5000) throw Error(Errc::invalid_argument, "Shapiro-Wilk needs 3 <= n <= 5000");
  std::vector<double> x(x_in.begin(), x_in.end());
  std::sort(x.begin(), x.end());
  if (!(x.back() - x.front() > 0.0)) throw Error(Errc::degenerate, "Shapiro-Wilk sample has zero variance");

  static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
  static constexpr double g[] = {-2.273, 0.459};

  // Coefficients for the upper half, largest order statistic first; the lower
  // half is the negated mirror image.
  const int half = n / 2;
  std::vector<double> a(std::size_t(half) + 1, 0.0);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    const double an = n;
    std::vector<double> m(static_cast<std::size_t>(half));
    double summ2 = 0.0;
    for (int i = 0; i < half; ++i) {
      m[std::size_t(i)] = -normal_quantile((i + 1 - 0.375) / (an + 0.25));
      summ2 += m[std::size_t(i)] * m[std::size_t(i)];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, rsn) + m[0] / ssumm2;
    int first = 1;
    double fac;
    if (n > 5) {
      first = 2;
      const double a2 = poly(c2, rsn) + m[1] / ssumm2;
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (int i = first; i < half; ++i) a[std::size_t(i)] = m[std::size_t(i)] / fac;
  }

  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  double num = 0.0;
  for (int i = 0; i < half; ++i) num += a[std::size_t(i)] * (x[std::size_t(n - 1 - i)] - x[std::size_t(i)]);
  const double w = std::min(1.0, num * num / ss);

  TestReport r;
  r.method = "shapiro-wilk";
  r.statistic = w;
  r.n = n;
  if (n == 3) {
    const double pi6 = 6.0 / 3.14159265358979323846;
    const double stqr = std::asin(std::sqrt(0.75));
    r.p_value = std::clamp(pi6 * (std::asin(std::sqrt(w)) - stqr), 0.0, 1.0);
    return r;
  }
  const double w1 = 1.0 - w;
  if (!(w1 > 0.0)) {
    r.p_value = 1.0;
    return r;
  }
  double y = std::log(w1);
  double mu;
  double sigma;
  if (n <= 11) {
    const double gamma = poly(g, n);
    if (y >= gamma) {
      r.p_value = 1e-99;
      return r;
    }
    y = -std::log(gamma - y);
    mu = poly(c3, n);
    sigma = std::exp(poly(c4, n));
  } else {
    const double xx = std::log(double(n));
    mu = poly(c5, xx);
    sigma = std::exp(poly(c6, xx));
  }
  r.p_value = std::clamp(1.0 - normal_cdf((y - mu) / sigma), 0.0, 1.0);
  return r;
}

// ---- effect size and power -------------------------------------------------------

double cohens_d_paired(std::span<const double> a, std::span<const double> b) {
  const auto d = differences(a, b);
  if (d.size() < 2) throw Error(Errc::invalid_argument, "Cohen's d needs n >= 2");
  const MeanSd ms = mean_sd(d);
  if (!(ms.sd > 0.0)) throw Error(Errc::degenerate, "zero-variance differences: Cohen's d undefined");
  return ms.mean / ms.sd;
}

double t_power(double d, int n, double alpha) {
  if (n < 2) throw Error(Errc::invalid_argument, "power needs n >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::invalid_argument, "alpha must lie in (0,1)");
  return normal_cdf(d * std::sqrt(double(n)) - normal_quantile(1.0 - alpha));
}

// ---- battery -------------------------------------------------------------------

Battery run_hypothesis_battery(std::span<const ParticipantSummary> summaries) {
  std::vector<double> none;
  std::vector<double> bim;
  std::vector<double> ebim;
  for (const ParticipantSummary& s : summaries) {
    if (!s.complete()) continue;
    none.push_back(*s.mean[0]);
    bim.push_back(*s.mean[1]);
    ebim.push_back(*s.mean[2]);
  }
  if (none.size() < 2) throw Error(Errc::invalid_argument, "hypothesis battery needs >= 2 complete participants");

  struct HypothesisDef {
    int id;
    bool paired;
    std::vector<double> d;
    Tail tail;
  };
  auto shifted = [](const std::vector<double>& v, double mu) {
    std::vector<double> out(v);
    for (double& x : out) x -= mu;
    return out;
  };
  const std::vector<HypothesisDef> specs = {
      {1, true, differences(ebim, bim), Tail::greater},
      {2, false, shifted(bim, 0.5), Tail::less},
      {3, false, shifted(ebim, 0.5), Tail::greater},
      {4, true, differences(none, bim), Tail::greater},
      {5, true, differences(none, ebim), Tail::greater},
  };

  Battery b;
  b.participants = int(none.size());
  for (const char* method : {"t-test", "wilcoxon"}) {
    for (const HypothesisDef& s : specs) {
      BatteryCell cell;
      cell.hypothesis = s.id;
      cell.method = method;
      cell.paired = s.paired;
      try {
        if (std::string(method) == "t-test") {
          TestReport r = t_test(s.d, s.tail, s.paired ? "paired-t" : "one-sample-t");
          cell.report = r;
        } else {
          cell.report = wilcoxon_signed_rank(s.d, s.tail);
        }
      } catch (const Error& e) {
        if (e.code() != Errc::degenerate) throw;
        cell.degenerate = e.what();
      }
      b.cells.push_back(std::move(cell));
    }
  }
  try {
    if (specs[0].d.size() >= 3) b.normality = shapiro_wilk(specs[0].d);
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate) throw;
  }
  try {
    b.cohens_d = cohens_d_paired(ebim, bim);
    b.power = t_power(*b.cohens_d, b.participants, b.alpha);
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate) throw;
  }
  return b;
}

}  // namespace ebim
