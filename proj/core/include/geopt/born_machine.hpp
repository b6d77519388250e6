#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "geopt/bitstring.hpp"
#include "geopt/errors.hpp"

namespace geopt {

/// Rank-3 site tensor (left bond x physical dim 2 x right bond), stored as
/// one (left x right) matrix per physical value.
using SiteTensor = std::array<Eigen::MatrixXd, 2>;

/// Matrix product state over N binary variables. The model distribution is
/// the Born rule P(x) = Psi(x)^2 / Z with Psi(x) the chain contraction of
/// the site matrices selected by x. Tensors are real.
struct MpsModel {
  std::vector<SiteTensor> sites;
  std::vector<int> bond_dims;   // n_vars + 1 entries; first and last are 1
  int canonical_center = -1;    // -1 when no canonical form is maintained

  int n_vars() const noexcept { return static_cast<int>(sites.size()); }
};

struct TrainConfig {
  int max_bond_dim = 10;
  double svd_cutoff = 1e-7;  // discarded-weight threshold at each split
  double learning_rate = 0.05;
  int n_sweeps = 10;  // one sweep = left-to-right pass plus right-to-left pass
  int grad_steps_per_bond = 5;
  std::uint64_t rng_seed = 0;
};

/// Training rows; duplicates are allowed and carry weight.
struct BitstringDataset {
  int n_vars = 0;
  std::vector<Bitstring> rows;
};

/// Shape and invariant checks; throws invalid_data with a description.
void validate_mps(const MpsModel& model);

/// Random MPS with bond dimensions min(init_bond, maximal exact value),
/// entries uniform in [0.9, 1.1], normalized so Z = 1 (canonical center 0).
/// Deterministic for a fixed seed.
MpsModel init_mps(int n_vars, int init_bond, std::uint64_t seed);

/// Brings the model to mixed-canonical form around `center`: sites left of
/// the center become left-orthonormal, sites right of it right-orthonormal.
void canonicalize(MpsModel& model, int center);

double log_partition_function(const MpsModel& model);
double partition_function(const MpsModel& model);

/// ln P(x); -infinity when Psi(x) is exactly 0.
double log_born_probability(const MpsModel& model, const Bitstring& x);

double born_probability(const MpsModel& model, const Bitstring& x);

/// Mean negative log-likelihood over the rows. A row with P = 0 exactly
/// raises out_of_support carrying the offending row.
double negative_log_likelihood(const MpsModel& model, const BitstringDataset& data);

/// Merged two-site tensor at `bond` (sites bond and bond+1), indexed by the
/// two physical values; block [s][t] is (left_dim x right_dim).
using TwoSiteTensor = std::array<std::array<Eigen::MatrixXd, 2>, 2>;

TwoSiteTensor merge_bond(const MpsModel& model, int bond);

/// Analytic gradient of the NLL with respect to the merged tensor at `bond`.
/// Requires the canonical center at `bond` or `bond`+1 so that the partition
/// function equals the squared norm of the merged tensor.
TwoSiteTensor nll_gradient(const MpsModel& model, const BitstringDataset& data, int bond);

/// Splits `merged` back into sites (bond, bond+1) by SVD, truncating at
/// max_bond_dim and discarded weight svd_cutoff. The canonical center moves
/// to bond+1 when move_right, else to bond.
void set_bond(MpsModel& model, int bond, const TwoSiteTensor& merged,
              int max_bond_dim, double svd_cutoff, bool move_right);

struct TrainReport {
  MpsModel model;
  std::vector<double> nll_per_sweep;  // entry 0 is the pre-training NLL
  WarningLog warnings;
};

/// Two-site sweep training by gradient descent on the NLL. The returned
/// model's NLL does not exceed the input model's by more than 1e-6; if it
/// does, a warning record is emitted instead of failing.
TrainReport train(const MpsModel& model, const BitstringDataset& data, const TrainConfig& cfg);

/// Exact sequential sampling (no Markov chain). Deterministic per seed.
std::vector<Bitstring> sample(const MpsModel& model, int n_samples, std::uint64_t seed);

/// Serialization container: model plus the training configuration used.
struct MpsBundle {
  MpsModel model;
  TrainConfig train_config;
};

enum class MpsFileFormat { binary, json };

/// Versioned container. Binary round-trips bit-exactly; JSON value-exactly.
void save_mps(const MpsBundle& bundle, const std::string& path, MpsFileFormat format);
MpsBundle load_mps(const std::string& path);

}  // namespace geopt
