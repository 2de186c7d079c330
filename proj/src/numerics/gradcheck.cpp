#include "mpt/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstring>
#include <random>

#include "mpt/error.hpp"

namespace mpt {
namespace {

double evaluate(const ScalarObjective& f, const ParamStore& store) {
  Tape tape;
  return f(tape, store).value().item();
}

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> all(size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (limit == 0 || size <= limit) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& p : params) worst = std::max(worst, p.max_rel_error);
  return worst;
}

const ParamGradCheck& GradCheckReport::worst() const {
  if (params.empty()) throw Error("empty gradient check report");
  return *std::max_element(params.begin(), params.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

GradCheckReport finite_diff_check(const ScalarObjective& f, const ParamStore& store,
                                  const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw ConfigError("finite_diff_check: step must be positive");

  std::map<std::string, DenseArray> analytic;
  double base = 0.0;
  {
    Tape tape;
    Var loss = f(tape, store);
    base = loss.value().item();
    tape.backward(loss);
    analytic = tape.parameter_grads();
  }
  const double again = evaluate(f, store);
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw NumericError("finite_diff_check: objective is not deterministic");
  }

  std::mt19937_64 rng(options.seed);
  ParamStore probe = store;
  GradCheckReport report;
  for (const auto& [name, param] : store.entries()) {
    ParamGradCheck check;
    check.name = name;
    const auto it = analytic.find(name);
    for (std::size_t i : pick_coords(param.value.size(), options.max_coords_per_param, rng)) {
      DenseArray& slot = probe.mutable_value(name);
      const double original = slot[i];
      slot[i] = original + options.h;
      const double plus = evaluate(f, probe);
      slot[i] = original - options.h;
      const double minus = evaluate(f, probe);
      slot[i] = original;

      const double numeric = (plus - minus) / (2.0 * options.h);
      const double exact = it == analytic.end() ? 0.0 : it->second[i];
      const double rel = std::abs(exact - numeric) / std::max({1.0, std::abs(exact), std::abs(numeric)});
      if (!std::isfinite(rel)) throw NumericError("finite_diff_check: non-finite gradient for " + name);
      if (check.coords_checked == 0 || rel > check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = i;
        check.analytic = exact;
        check.numeric = numeric;
      }
      ++check.coords_checked;
    }
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace mpt
