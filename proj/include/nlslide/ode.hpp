#pragma once

// Dormand-Prince 5(4) with Hairer's continuous extension, templated on the
// scalar type. Single steps are exposed so hybrid drivers can reject a step
// when the right-hand side fails (e.g. a tracked root is lost).

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace nlslide {

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
struct StepperOptions {
  Scalar rtol = Scalar(1e-8);
  Scalar atol = Scalar(1e-10);
  Scalar max_step = std::numeric_limits<Scalar>::infinity();
};

/// Interpolant over one accepted step.
template <class Scalar>
struct DenseStep {
  Scalar t0{}, h{};
  VectorX<Scalar> r1, r2, r3, r4, r5;

  Scalar t1() const { return t0 + h; }
  VectorX<Scalar> operator()(Scalar t) const {
    const Scalar s = (t - t0) / h;
    const Scalar s1 = Scalar(1) - s;
    return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
  }
};

/// Cubic Hermite interpolation between (t0, y0, f0) and (t1, y1, f1).
template <class Scalar>
VectorX<Scalar> hermite(Scalar t0, const VectorX<Scalar>& y0, const VectorX<Scalar>& f0, Scalar t1,
                        const VectorX<Scalar>& y1, const VectorX<Scalar>& f1, Scalar t) {
  const Scalar h = t1 - t0;
  if (h == Scalar(0)) return y0;
  const Scalar s = (t - t0) / h;
  const Scalar s2 = s * s;
  const Scalar s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * f0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * f1;
}

template <class Scalar>
class DormandPrince {
 public:
  using Vector = VectorX<Scalar>;

  explicit DormandPrince(StepperOptions<Scalar> opt = {}) : opt_(opt) {}

  struct Attempt {
    bool accepted = false;
    Scalar error = 0;      // scaled RMS error (accept when <= 1)
    Scalar h_next = 0;     // suggested next step (signed)
    Vector y1, f1;         // valid when accepted
    DenseStep<Scalar> dense;
  };

  /// One attempt from (t, y) with signed step h; f0 = f(t, y) must be supplied (FSAL).
  template <class Rhs>
  Attempt attempt(Rhs&& f, Scalar t, const Vector& y, const Vector& f0, Scalar h) const {
    static const Scalar c2 = Scalar(1) / 5, c3 = Scalar(3) / 10, c4 = Scalar(4) / 5, c5 = Scalar(8) / 9;
    static const Scalar a21 = Scalar(1) / 5;
    static const Scalar a31 = Scalar(3) / 40, a32 = Scalar(9) / 40;
    static const Scalar a41 = Scalar(44) / 45, a42 = Scalar(-56) / 15, a43 = Scalar(32) / 9;
    static const Scalar a51 = Scalar(19372) / 6561, a52 = Scalar(-25360) / 2187, a53 = Scalar(64448) / 6561,
                        a54 = Scalar(-212) / 729;
    static const Scalar a61 = Scalar(9017) / 3168, a62 = Scalar(-355) / 33, a63 = Scalar(46732) / 5247,
                        a64 = Scalar(49) / 176, a65 = Scalar(-5103) / 18656;
    static const Scalar a71 = Scalar(35) / 384, a73 = Scalar(500) / 1113, a74 = Scalar(125) / 192,
                        a75 = Scalar(-2187) / 6784, a76 = Scalar(11) / 84;
    static const Scalar e1 = Scalar(71) / 57600, e3 = Scalar(-71) / 16695, e4 = Scalar(71) / 1920,
                        e5 = Scalar(-17253) / 339200, e6 = Scalar(22) / 525, e7 = Scalar(-1) / 40;
    static const Scalar d1 = Scalar(-12715105075.0) / Scalar(11282082432.0),
                        d3 = Scalar(87487479700.0) / Scalar(32700410799.0),
                        d4 = Scalar(-10690763975.0) / Scalar(1880347072.0),
                        d5 = Scalar(701980252875.0) / Scalar(199316789632.0),
                        d6 = Scalar(-1453857185.0) / Scalar(822651844.0),
                        d7 = Scalar(69997945.0) / Scalar(29380423.0);

    const Vector& k1 = f0;
    const Vector k2 = f(t + c2 * h, Vector(y + h * (a21 * k1)));
    const Vector k3 = f(t + c3 * h, Vector(y + h * (a31 * k1 + a32 * k2)));
    const Vector k4 = f(t + c4 * h, Vector(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    const Vector k5 = f(t + c5 * h, Vector(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const Vector k6 = f(t + h, Vector(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    Vector y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    Vector k7 = f(t + h, y1);

    const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    Scalar sum = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const Scalar sc = opt_.atol + opt_.rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
      sum += (err[i] / sc) * (err[i] / sc);
    }
    Attempt a;
    a.error = std::sqrt(sum / static_cast<Scalar>(std::max<Eigen::Index>(1, y.size())));
    if (!std::isfinite(static_cast<double>(a.error))) a.error = std::numeric_limits<Scalar>::infinity();
    a.accepted = a.error <= Scalar(1);
    const Scalar fac = a.error == Scalar(0)
                           ? Scalar(10)
                           : std::clamp(Scalar(0.9) * std::pow(a.error, Scalar(-0.2)), Scalar(0.2), Scalar(10));
    a.h_next = clamp_step(h * (a.accepted ? fac : std::min(fac, Scalar(1))));
    if (a.accepted) {
      const Vector ydiff = y1 - y;
      const Vector bspl = h * k1 - ydiff;
      a.dense.t0 = t;
      a.dense.h = h;
      a.dense.r1 = y;
      a.dense.r2 = ydiff;
      a.dense.r3 = bspl;
      a.dense.r4 = ydiff - h * k7 - bspl;
      a.dense.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      a.y1 = std::move(y1);
      a.f1 = std::move(k7);
    }
    return a;
  }

  /// Initial step heuristic (Hairer, Norsett & Wanner, II.4).
  template <class Rhs>
  Scalar initial_step(Rhs&& f, Scalar t, const Vector& y, const Vector& f0, Scalar direction) const {
    auto norm = [&](const Vector& v) {
      Scalar s = 0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const Scalar sc = opt_.atol + opt_.rtol * std::abs(y[i]);
        s += (v[i] / sc) * (v[i] / sc);
      }
      return std::sqrt(s / static_cast<Scalar>(std::max<Eigen::Index>(1, v.size())));
    };
    const Scalar d0 = norm(y);
    const Scalar d1 = norm(f0);
    Scalar h0 = (d0 < Scalar(1e-5) || d1 < Scalar(1e-5)) ? Scalar(1e-6) : Scalar(0.01) * d0 / d1;
    h0 = std::min(h0, opt_.max_step);
    const Vector f1 = f(t + direction * h0, Vector(y + direction * h0 * f0));
    const Scalar d2 = norm(Vector(f1 - f0)) / h0;
    const Scalar big = std::max(d1, d2);
    const Scalar h1 = big <= Scalar(1e-15) ? std::max(Scalar(1e-6), h0 * Scalar(1e-3))
                                           : std::pow(Scalar(0.01) / big, Scalar(0.2));
    return direction * std::min({Scalar(100) * h0, h1, opt_.max_step});
  }

  const StepperOptions<Scalar>& options() const { return opt_; }

 private:
  Scalar clamp_step(Scalar h) const {
    const Scalar m = opt_.max_step;
    return h > m ? m : (h < -m ? -m : h);
  }

  StepperOptions<Scalar> opt_;
};

}  // namespace nlslide
