// Acceptance suite: one PASS/FAIL line per criterion, tolerances and runtime
// limits fixed here rather than taken from experiment defaults.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "foldlab/canrel.hpp"
#include "foldlab/cli.hpp"
#include "foldlab/decomp.hpp"
#include "foldlab/phase.hpp"

using namespace foldlab;
using cli::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double measured(const cli::Report& r, const std::string& key) { return r.results.at(key).get<double>(); }

int failures = 0;

void criterion(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = t < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("criterion %2d: %s  %s | %s | %.2f s (limit %.0f s%s)\n", id, pass ? "PASS" : "FAIL", title,
              o.detail.c_str(), t, limit_s, in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

}  // namespace

int main() {
  criterion(1, "determinant formulas", 5, [] {
    const auto r = cli::run(json{{"experiment", "det-verify"}, {"betas", {0.5, 1.0, 2.0}}, {"ns", {1, 2}},
                                 {"samples", 100}, {"tolerance", 1e-6}},
                            1);
    const double worst = measured(r, "max_rel_err");
    const double anchor = phase::fefferman_det(1.0, 1, 1.0);
    const long long rows = static_cast<long long>(r.table.rows.size());
    return Outcome{worst < 1e-6 && std::abs(anchor + 2.0) < 1e-12 && rows == 1200,
                   fmt("max rel err %.3g over %.0f comparisons, det(beta=1,n=1,r=1) = %.12g", worst,
                       static_cast<double>(rows), anchor)};
  });

  criterion(2, "singular variety", 1, [] {
    const auto v = canrel::singular_radius(1.0, 0.0);
    const double res0 = std::abs(phase::heisenberg_det(1.0, geometry::DiagonalB::zero(1), v.radius, 1.0));
    bool ok = v.exists && std::abs(v.q_root - std::sqrt(2.0)) < 1e-12 && res0 < 1e-10;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> bu(0.5, 2.0), bb(-2.0, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const double beta = bu(rng), b1 = bb(rng);
      const auto w = canrel::singular_radius(beta, b1);
      ok = ok && w.exists;
      worst = std::max(worst, std::abs(phase::heisenberg_det(beta, geometry::DiagonalB({b1}), w.radius, 1.0)));
    }
    ok = ok && worst < 1e-10;
    return Outcome{ok, fmt("Q = %.12g, plug-back %.3g, worst of 20 random %.3g", v.q_root, res0, worst)};
  });

  criterion(3, "fold conditions", 10, [] {
    const auto r = cli::run(json{{"experiment", "fold-check"}, {"beta", 1.0}, {"n", 1}, {"b", {0.0}},
                                 {"samples", 50}, {"theta", 0.1}, {"first_order_floor", 1e-3},
                                 {"perturbation", 1e-3}},
                            1);
    bool ok = r.table.rows.size() == 2;
    for (const auto& row : r.table.rows) {
      // columns: variant cubic exists radius points min_rank max_rank min_margin min_first_order_ratio
      ok = ok && std::get<bool>(row[2]) && std::get<long long>(row[4]) == 50 && std::get<long long>(row[5]) == 1 &&
           std::get<long long>(row[6]) == 1 && std::get<double>(row[7]) >= 0.1 && std::get<double>(row[8]) >= 1e-3;
    }
    return Outcome{ok, fmt("margin %.4g / %.4g, first-order ratio %.4g / %.4g (base / rho=1e-3)",
                           r.results["base"]["min_margin"].get<double>(),
                           r.results["perturbed"]["min_margin"].get<double>(),
                           r.results["base"]["min_first_order_ratio"].get<double>(),
                           r.results["perturbed"]["min_first_order_ratio"].get<double>())};
  });

  criterion(4, "curve fold", 1, [] {
    const auto f = canrel::curve_fold_check(1.0, 2, 1.0);
    return Outcome{std::abs(f.x0 - 1.0) <= 1e-8 && std::abs(f.third_derivative + 6.0) <= 1e-6,
                   fmt("x0 = %.12g, third derivative = %.12g", f.x0, f.third_derivative)};
  });

  criterion(5, "rate calibration d=1", 60, [] {
    const auto lin = cli::run(json{{"experiment", "rate-sweep"}, {"family", "bilinear"}, {"lambda_exp_range", {6, 12}}}, 1);
    const auto fold = cli::run(json{{"experiment", "rate-sweep"}, {"family", "curve"}, {"beta", 1.0}, {"k", 2},
                                    {"mu", 1.0}, {"lambda_exp_range", {6, 12}}},
                               1);
    const double a = measured(lin, "slope"), b = measured(fold, "slope");
    return Outcome{std::abs(a + 0.5) <= 0.05 && std::abs(b + 1.0 / 3.0) <= 0.05 && b - a >= 0.1,
                   fmt("bilinear %.4f, curve fold %.4f, separation %.4f", a, b, b - a)};
  });

  criterion(6, "rate d=2 Heisenberg", 600, [] {
    const auto crit = cli::run(json{{"experiment", "rate-sweep"}, {"family", "cond-ii"}, {"beta", 1.0}, {"n", 1},
                                    {"mu", 1.0}, {"b", 0.0}, {"lambda_exp_range", {3, 7}}},
                               1);
    const auto free = cli::run(json{{"experiment", "rate-sweep"}, {"family", "cond-ii"}, {"beta", 1.0}, {"n", 1},
                                    {"mu", 0.0}, {"lambda_exp_range", {3, 7}}},
                               1);
    const double a = measured(crit, "slope"), b = measured(free, "slope");
    return Outcome{std::abs(a + 5.0 / 6.0) <= 0.1 && std::abs(b + 1.0) <= 0.1,
                   fmt("critical coupling %.4f, mu=0 %.4f", a, b)};
  });

  criterion(7, "key estimate", 900, [] {
    double slopes[3];
    const double alphas[3] = {0.0, 5.0 / 6.0, 1.0};
    const double expect[3] = {-5.0 / 6.0, 0.0, 1.0 / 6.0};
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      const auto r = cli::run(json{{"experiment", "key-estimate"}, {"beta", 1.0}, {"n", 1}, {"b", {0.0}},
                                   {"alpha", alphas[i]}, {"js_range", {2, 6}}},
                              1);
      slopes[i] = measured(r, "slope");
      ok = ok && std::abs(slopes[i] - expect[i]) <= 0.15;
    }
    return Outcome{ok, fmt("slopes %.4f (alpha 0), %.4f (alpha 5/6), %.4f (alpha 1)", slopes[0], slopes[1], slopes[2])};
  });

  json gains;
  criterion(8, "almost orthogonality", 900, [&gains] {
    const auto r = cli::run(json{{"experiment", "ortho-sweep"}, {"beta", 1.0}, {"n", 1}, {"b", {0.0}},
                                 {"alpha", 5.0 / 6.0}, {"j", 1}, {"jprimes_range", {1, 5}}},
                            1);
    gains = r.results["gains"];
    bool sub = true;
    for (const auto& row : r.table.rows) sub = sub && std::get<bool>(row.back());
    const double slope = measured(r, "slope");
    return Outcome{slope <= -1.0 / 6.0 + 0.1 && sub,
                   fmt("slope %.4f over |j-j'| = 0..4, submultiplicative %.0f", slope, sub ? 1.0 : 0.0)};
  });

  criterion(9, "regime bounds", 300, [] {
    const auto r = cli::run(json{{"experiment", "regime-check"}, {"beta", 1.0}, {"n", 1}, {"b", {0.0}}, {"alpha", 0.0}}, 1);
    const double A = measured(r, "A");
    long long flagged = 0;
    for (const auto& row : r.table.rows) flagged += std::get<bool>(row.back()) ? 1 : 0;
    return Outcome{A <= 10.0 && flagged == 0,
                   fmt("A = %.4f over %.0f rows, %.0f flagged", A, static_cast<double>(r.table.rows.size()),
                       static_cast<double>(flagged))};
  });

  criterion(10, "partitions and Cotlar-Stein", 1, [&gains] {
    const auto p = decomp::check_partitions(decomp::CutoffFamily(0.125));
    const double worst = std::max({p.dyadic, p.patches, p.resummation});
    std::map<int, double> g;
    for (const auto& [k, v] : gains.items()) g[std::stoi(k)] = v.get<double>();
    const auto b = decomp::cotlar_assemble(g);
    bool raised = false;
    try {
      decomp::cotlar_assemble({{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 1.0}});
    } catch (const InvalidArgument&) {
      raised = true;
    }
    return Outcome{worst <= 1e-12 && g.size() >= 2 && std::isfinite(b.total) && raised,
                   fmt("partition error %.3g, Cotlar total %.6g, constant gains raise %.0f", worst, b.total,
                       raised ? 1.0 : 0.0)};
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
