#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rswitch {

enum class Family {
  Poisson,
  NegBin,
  ZipTau,    // zero-inflated Poisson, mixing weight 1/(1+exp(-tau*log(rate)))
  ZipGamma,  // zero-inflated Poisson, mixing weight 1/(1+exp(-gamma'x))
  ZinbTau,
  ZinbGamma,
  Mnl,       // multinomial logit over outcomes 1..I, last outcome's block fixed to zero
  ZeroOnly,  // point mass at zero counts
};

bool is_count_family(Family f);
bool family_has_alpha(Family f);
bool family_has_tau(Family f);
bool family_has_gamma(Family f);
const char* family_name(Family f);
Family family_from_name(const std::string& s);

// Assembled parameters of one state. For Mnl, beta holds n_outcomes blocks of
// n_cov entries; the last block is identically zero.
struct StateParams {
  std::vector<double> beta;
  std::optional<double> ln_alpha;
  std::optional<double> tau;
  std::vector<double> gamma;
};

struct Restriction {
  enum class Kind { Free, Zero, MinusInfinity, TiedTo };
  Kind kind = Kind::Free;
  int parent = -1;  // full-table slot index; parent must itself be Free
};

enum class Role { Beta, LnAlpha, Tau, Gamma };

struct ParamDesc {
  int state = 1;     // 0 or 1
  Role role = Role::Beta;
  int outcome = 0;   // Mnl beta blocks: 1..n_outcomes-1; 0 otherwise
  int cov = 0;       // covariate column for Beta/Gamma
  std::string name;  // e.g. "s0.beta.const", "s1.ln_alpha", "s0.beta.2.ramps"
};

// Two-state model specification over a fixed covariate design. The full
// parameter table lists every slot of state 0 then state 1; restrictions are
// aligned with it. Free slots, in table order, form the sampling vector.
struct ModelSpec {
  Family family0 = Family::ZeroOnly;
  Family family1 = Family::NegBin;
  bool single_state = false;  // only state 1 exists; no switching machinery
  int n_cov = 0;
  int n_outcomes = 0;  // Mnl only
  std::vector<std::string> cov_names;

  std::vector<ParamDesc> table;
  std::vector<Restriction> restrictions;
  std::vector<int> free_of_slot;           // slot -> free index or -1
  std::vector<int> slot_of_free;           // free index -> slot
  std::vector<std::string> free_names;
  int state0_slots = 0;                    // table entries belonging to state 0

  int n_free() const { return static_cast<int>(slot_of_free.size()); }

  // Builds and validates a spec. `restr` is aligned with the slot table that
  // the same families/covariates imply (see param_table); an empty vector
  // means all Free. A MinusInfinity restriction is legal only on the state-0
  // intercept of a count family and converts state 0 to ZeroOnly.
  static ModelSpec make(Family f0, Family f1, int n_cov,
                        std::vector<std::string> cov_names,
                        std::vector<Restriction> restr, int n_outcomes = 0);

  static ModelSpec single(Family f, int n_cov, std::vector<std::string> cov_names,
                          std::vector<Restriction> restr = {}, int n_outcomes = 0);
};

// Slot table implied by a family for one state (helper for ModelSpec::make
// and the config layer).
std::vector<ParamDesc> param_table(Family f, int state, int n_cov,
                                   std::span<const std::string> cov_names,
                                   int n_outcomes);

// exp(beta'x).
double rate(std::span<const double> beta, std::span<const double> x);

// log P(a | rate) for Poisson counts; rate 0 is a point mass at zero.
double log_poisson(double lambda, long a);

// Negative binomial with overdispersion alpha = exp(ln_alpha):
// Gamma(a + 1/alpha) / (Gamma(1/alpha) a!) (1/(1+alpha*lambda))^(1/alpha)
//   * (alpha*lambda/(1+alpha*lambda))^a.
double log_negbin(double lambda, double ln_alpha, long a);

// Zero-inflated Poisson/NB in tau or gamma form.
double log_zero_inflated(Family f, const StateParams& p, std::span<const double> x, long a);

// log of exp(beta_i'x) / sum_j exp(beta_j'x); outcome is 1-based.
double log_mnl(const StateParams& p, std::span<const double> x, int outcome, int n_outcomes);

// Dispatch on the family of `state`; y is a count or a 1-based outcome.
double log_obs_likelihood(const ModelSpec& spec, int state, const StateParams& p,
                          std::span<const double> x, long y);

// Expands free values into both states' parameters, applying Zero and TiedTo
// slots. Tied children copy their (Free) parent's value.
std::pair<StateParams, StateParams> assemble_params(const ModelSpec& spec,
                                                    std::span<const double> free_values);

// Writes one slot's value into its state's parameter block.
void set_param(StateParams& p, const ParamDesc& d, int n_cov, double value);

}  // namespace rswitch
