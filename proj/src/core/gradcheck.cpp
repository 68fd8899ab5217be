#include "ditcod/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ditcod/errors.hpp"
#include "ditcod/tape.hpp"

namespace ditcod {

namespace {
double eval_scalar(const std::function<Tensor()>& f) {
  const Tensor y = f();
  if (y.numel() != 1) throw ShapeError("gradcheck: closure must return one element");
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericalError("gradcheck: closure returned a non-finite value");
  return v;
}
}  // namespace

GradcheckResult gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                          const GradcheckOptions& opt) {
  std::vector<Tensor> work = inputs;
  for (auto& t : work) t.set_requires_grad(true);

  std::vector<Tensor> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = f();
    if (y.numel() != 1) throw ShapeError("gradcheck: closure must return one element");
    if (!std::isfinite(y.item())) {
      throw NumericalError("gradcheck: closure returned a non-finite value");
    }
    tape.backward(y);
    for (const auto& t : work) analytic.push_back(tape.grad(t));
  }

  NoGradScope no_grad;
  GradcheckResult res;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t ti = 0; ti < work.size(); ++ti) {
    Tensor& t = work[ti];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords > 0 && coords.size() > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const auto central = [&](double h) {
        const double saved = t[c];
        t[c] = saved + h;
        const double up = eval_scalar(f);
        t[c] = saved - h;
        const double down = eval_scalar(f);
        t[c] = saved;
        return (up - down) / (2.0 * h);
      };
      const auto rel_err = [&](double x, double y) {
        return std::abs(x - y) / std::max({std::abs(x), std::abs(y), opt.floor});
      };
      const double numeric = central(opt.eps);
      const double a = analytic[ti][c];
      const double rel = rel_err(a, numeric);
      ++res.coords_checked;
      // A piecewise-linear kink within eps of x makes the central difference depend on
      // the step, while for a smooth f halving the step changes it by O(eps^2) only.
      if (rel >= opt.tol && rel_err(numeric, central(0.5 * opt.eps)) >= opt.tol) {
        ++res.coords_skipped;
        continue;
      }
      res.max_abs_error = std::max(res.max_abs_error, std::abs(a - numeric));
      if (rel > res.max_rel_error || res.coords_checked == 1) {
        res.max_rel_error = std::max(res.max_rel_error, rel);
        res.worst_input = ti;
        res.worst_coord = c;
      }
    }
  }
  const double skip_limit = opt.max_skip_fraction * static_cast<double>(res.coords_checked);
  res.passed = res.max_rel_error < opt.tol && static_cast<double>(res.coords_skipped) <= skip_limit;
  return res;
}

std::string describe(const GradcheckResult& r) {
  std::ostringstream os;
  os << (r.passed ? "ok" : "FAILED") << " max_rel=" << r.max_rel_error
     << " max_abs=" << r.max_abs_error << " coords=" << r.coords_checked
     << " skipped=" << r.coords_skipped
     << " worst=(input " << r.worst_input << ", coord " << r.worst_coord << ")";
  return os.str();
}

}  // namespace ditcod
