#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zubov/interval.hpp"
#include "zubov/net.hpp"
#include "zubov/system.hpp"

namespace zubov {

struct VerifyConfig {
  double decrease_margin = 1e-4;  // certified decrease rate floor
  double min_box_width = 5e-3;    // below this an Unknown box becomes a candidate
  long max_boxes = 2000000;       // per branch-and-bound run
  double bisection_tol = 1e-3;    // level-search resolution
  double inner_radius = 0.1;      // half-width of the inner certificate ball
  double unsafe_clearance = 1e-3; // refute h >= 1 - clearance
};

enum class BBStatus { CertifiedEmpty, Violated, ResourceExhausted };

struct BBResult {
  BBStatus status = BBStatus::CertifiedEmpty;
  std::optional<Box> candidate;  // unresolved minimum-width box, if Violated
  long boxes_processed = 0;
};

enum class PredVerdict { Refuted, Unknown };

/// Exhaustive refutation of a violation predicate over a box. The predicate
/// must be sound: Refuted promises that no point of the box satisfies the
/// violation. Unknown boxes split along their widest dimension, depth-first
/// in a fixed order, so counts and outcomes are reproducible. A Violated
/// result carries an unresolved candidate box, not a proven witness.
BBResult branch_and_bound(const std::function<PredVerdict(const Box&)>& pred,
                          const Box& root, const VerifyConfig& cfg);

/// Certificate that the quadratic form of `lin` strictly decreases on the
/// inf-norm ball of radius r0: lambda_max(A^T P + P A) + 2 |P|_2 C <= -mu
/// with C a sound bound on |J_f(x) - A|_2 over the ball.
struct InnerQuadratic {
  bool certified = false;
  double mu = 0.0;               // certified decrease rate of x^T P x
  double deviation_bound = 0.0;  // C
  double lambda_max = 0.0;       // of A^T P + P A
  double p_norm = 0.0;           // |P|_2
  std::string failure;           // violated inequality when not certified
};

InnerQuadratic verify_inner_quadratic(const SystemSpec& s, const Linearization& lin,
                                      double r0);

/// Refutes: exists x in Omega with W(x) <= c1 and x^T P x >= rho.
BBResult verify_bridge(const MLPParams& net, const SystemSpec& s,
                       const Linearization& lin, double c1, double rho,
                       const VerifyConfig& cfg);

/// Refutes: exists x in Omega with c1 <= W(x) <= c2 and
/// grad W(x) . f(x) >= -delta, against the original field f.
BBResult verify_decrease(const MLPParams& net, const SystemSpec& s, double c1,
                         double c2, const VerifyConfig& cfg);

/// Refutes both: (a) exists x in Omega with W(x) <= c2 and
/// h(x) >= 1 - unsafe_clearance; (b) exists x in the outer shell of Omega
/// (depth 4 * min_box_width) with W(x) <= c2.
BBResult verify_separation(const MLPParams& net, const SystemSpec& s, double c2,
                           const VerifyConfig& cfg);

enum class CertStatus { Certified, Failed, ResourceExhausted };

const char* to_string(CertStatus s);

struct Counterexample {
  std::vector<double> point;  // box center of the unresolved candidate
  std::string predicate;      // which violation could not be refuted
};

struct CertificationReport {
  CertStatus status = CertStatus::Failed;
  double rho_quad = 0.0;  // largest level certified for the quadratic baseline
  double c1 = 0.0;        // bridge level: {W <= c1} inside the quadratic region
  double c2 = 0.0;        // outer certified level
  double delta = 0.0;
  double eta = 0.0;
  long boxes_bridge = 0;
  long boxes_decrease = 0;
  long boxes_separation = 0;
  std::optional<Counterexample> counterexample;
};

struct QuadraticBaseline {
  bool certified = false;
  double rho = 0.0;
  long boxes = 0;
  std::string failure;
};

/// Largest rho such that {x^T P x <= rho} decreases under f outside the
/// inner ball and stays clear of obstacles and the boundary of Omega.
QuadraticBaseline quadratic_baseline(const SystemSpec& s, const Linearization& lin,
                                     const VerifyConfig& cfg);

/// Full chain: inner quadratic certificate, largest bridge level c1, largest
/// outer level c2 passing decrease and separation, quadratic baseline for
/// comparison. Certified means {W <= c2} is invariant, avoids the unsafe
/// set and the boundary of Omega, and every trajectory in it reaches
/// {W <= c1}, which lies inside the certified quadratic region.
CertificationReport bisect_levels(const MLPParams& net, const SystemSpec& s,
                                  const Linearization& lin, const VerifyConfig& cfg);

/// Report JSON. wall_time_s is serialized as null: the field is part of the
/// schema, but a value would break bit-identical reruns.
std::string report_to_json(const CertificationReport& r);

}  // namespace zubov
