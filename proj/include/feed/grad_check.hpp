#pragma once

#include <functional>
#include <vector>

#include "feed/tensor.hpp"

namespace feed {

// Central-difference gradient verification.
//
// `f` must return a scalar tensor built from the probed inputs. The analytic
// gradient comes from one backward pass; each coordinate of every input is
// then perturbed by +/- h (in single precision, no graph recorded). The result
// is max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
//
// Throws NumericError naming the coordinate if f is non-finite at a probe.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                  float h = 1e-3f);

// Single-input convenience form: f(x).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, float h = 1e-3f);

}  // namespace feed
