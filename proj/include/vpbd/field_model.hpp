#pragma once

#include "vpbd/geometry.hpp"
#include "vpbd/green.hpp"
#include "vpbd/poisson.hpp"

#include <memory>
#include <string>
#include <variant>

namespace vpbd {

// Static electric field E = -grad U with cached norms.
class FieldModel {
 public:
  enum class Source { Zero, Constant, Linear, AnalyticAppendix, LinearPoisson, VPME };

  static FieldModel zero(int dimension = 2);
  static FieldModel constant(const Vec& e);
  // E = k x, U = -k |x|^2 / 2.
  static FieldModel linear(double k, int dimension = 2);
  static FieldModel appendix(const AppendixField& field);
  static FieldModel from_solution(PoissonSolution solution);

  Source source() const { return source_; }
  std::string id() const { return id_; }

  Vec field(double t, const Vec& x) const;
  double potential(double t, const Vec& x) const;

  double sup_norm() const { return sup_norm_; }
  double lipschitz() const { return lipschitz_; }
  // Frozen fields carry no time dependence.
  double time_lipschitz() const { return 0.0; }

  const PoissonSolution* solution() const;

  // Minimum of E.n over boundary samples; positive means outgoing.
  double outgoing_margin(const ConvexDomain& domain, int samples = 64) const;
  // Minimum of E.grad(xi) over collar samples.
  double collar_normal_minimum(const ConvexDomain& domain) const;

 private:
  struct ZeroField {
    int dimension;
  };
  struct ConstantField {
    Vec e;
  };
  struct LinearField {
    double k;
    int dimension;
  };
  struct GridField {
    std::shared_ptr<const PoissonSolution> solution;
  };
  using Impl = std::variant<ZeroField, ConstantField, LinearField, AppendixField, GridField>;

  FieldModel(Source source, Impl impl, std::string id);
  void compute_norms();

  Source source_;
  Impl impl_;
  std::string id_;
  double sup_norm_ = 0;
  double lipschitz_ = 0;
};

}  // namespace vpbd
