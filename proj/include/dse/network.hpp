#pragma once

#include <complex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>

#include "dse/types.hpp"

namespace dse {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using SparseComplexMatrix = Eigen::SparseMatrix<Complex>;

struct Bus {
  int id = 0;
  Complex shunt{0.0, 0.0};  ///< G + jB in pu on system base
};

/// Terminal admittances of a two-port branch:
///   I_from = ff V_from + ft V_to,   I_to = tf V_from + tt V_to.
struct BranchAdmittance {
  Complex ff, ft, tf, tt;
};

/// Pi-model line or transformer with an off-nominal tap on the from side.
struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;       ///< total line charging
  double ratio = 1.0;   ///< off-nominal tap (1 for lines)
  bool in_service = true;

  Complex series_admittance() const { return 1.0 / Complex(r, x); }
  BranchAdmittance admittance() const;
};

class NetworkModel {
 public:
  NetworkModel() = default;
  NetworkModel(std::vector<Bus> buses, std::vector<Branch> branches,
               double base_mva = 100.0, double frequency_hz = 60.0);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  int bus_count() const { return static_cast<int>(buses_.size()); }
  double base_mva() const { return base_mva_; }
  double frequency() const { return frequency_hz_; }

  bool has_bus(int id) const { return index_.count(id) != 0; }
  /// Position of bus `id` in buses(); throws std::out_of_range.
  int index_of(int id) const;

  /// Index of the first in-service branch joining a and b (either direction).
  std::optional<std::size_t> find_branch(int a, int b) const;

  /// Bus admittance matrix built from branches and bus shunts.
  const SparseComplexMatrix& admittance() const { return ybus_; }
  ComplexMatrix admittance_dense() const { return ComplexMatrix(ybus_); }

  /// Buses listed (in that order) with every branch whose ends both lie in
  /// the set. Shunts are kept.
  NetworkModel subnetwork(const std::vector<int>& bus_ids) const;

  /// Neighbour bus indices per bus index over in-service branches.
  std::vector<std::vector<int>> adjacency() const;
  bool is_connected() const;

 private:
  void build_admittance();

  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  double base_mva_ = 100.0;
  double frequency_hz_ = 60.0;
  std::unordered_map<int, int> index_;
  SparseComplexMatrix ybus_;
};

/// Real 2n x 2n expansion of a complex n x n matrix with interleaved
/// (re, im) ordering: [G -B; B G] per entry.
Matrix real_expansion(const ComplexMatrix& y);

}  // namespace dse
