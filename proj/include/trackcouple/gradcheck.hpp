#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trackcouple/coupling.hpp"
#include "trackcouple/grad.hpp"
#include "trackcouple/synthetic.hpp"

namespace trackcouple {

// A small scene with observations for every term, used to compare tape
// gradients against finite differences.
struct GradcheckFixture {
  std::string kind;
  std::uint64_t seed = 0;
  SyntheticScene scene;
  CouplingState state;
  Observations supervised;
  Observations pseudo;
  double huber_delta = 0.05;
};

// Kinds: random, noiseless, kink (Huber delta placed on a residual norm),
// dynamic (half the points move), selfsup (static scene, pseudo tracks).
const std::vector<std::string>& gradcheck_fixture_kinds();
GradcheckFixture make_gradcheck_fixture(const std::string& kind, std::uint64_t seed);

// One independently evaluable loss term.
struct TermSpec {
  Term term;
  CamTarget target = CamTarget::kGroundTruth;
  std::string name;
};
const std::vector<TermSpec>& gradcheck_terms();

double evaluate_term(const TermSpec& spec, const GradcheckFixture& fixture, const CouplingState& live,
                     const CouplingState& detached, Tape* tape);

struct GradcheckRow {
  std::string fixture;
  std::string term;
  std::string block;
  bool routed = false;     // the term may send gradient to this block
  std::size_t samples = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_analytic = 0.0;  // largest |analytic| over the block
  bool pass = false;
};

struct GradcheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  double corruption = 0.0;       // test hook, see FdOptions
  std::size_t max_samples = 24;  // FD indices per routed block
};

// Routed blocks: central differences against a frozen detached copy, so the
// numeric derivative sees the same stop-gradients. Other blocks: the analytic
// gradient must be exactly zero.
std::vector<GradcheckRow> run_gradcheck(GradcheckFixture& fixture, const GradcheckOptions& options = {});

}  // namespace trackcouple
