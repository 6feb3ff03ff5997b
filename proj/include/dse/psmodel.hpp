#pragma once

#include <string>
#include <vector>

#include "dse/descriptor_model.hpp"
#include "dse/devices.hpp"
#include "dse/network.hpp"
#include "dse/pmu.hpp"

namespace dse {

/// Discrete-time noise variances for the estimation model. Differential
/// entries are per-scan variances; rotor speeds get their own value.
struct NoiseSettings {
  double differential = 1e-8;
  double speed = 1e-10;
  double algebraic = 1e-8;
  double measurement_std = 1e-3;
};

/// Ordered layout of x = [y; v]: nine states per generator, then interleaved
/// (re, im) voltages per bus.
class StateIndexMap {
 public:
  StateIndexMap() = default;
  StateIndexMap(const std::vector<int>& generator_buses,
                const std::vector<int>& bus_ids);

  int differential_size() const { return n_d_; }
  int algebraic_size() const { return n_a_; }
  int size() const { return n_d_ + n_a_; }

  /// Offset of generator g's first state within y.
  int generator_offset(int g) const { return two_axis::kSize * g; }
  /// Index within x of a generator state.
  int generator_state(int g, int state) const {
    return generator_offset(g) + state;
  }
  /// Index within v of the real part of bus position b (imaginary is +1).
  int voltage_re(int bus_position) const { return 2 * bus_position; }
  /// Index within x of the real voltage of bus position b.
  int state_voltage_re(int bus_position) const { return n_d_ + 2 * bus_position; }

  const std::string& name(int x_index) const { return names_.at(x_index); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  int n_d_ = 0;
  int n_a_ = 0;
  std::vector<std::string> names_;
};

struct NoiseModel {
  Matrix q_d;
  Matrix q_a;
  Matrix r;
};

/// Inputs for the estimation model of one area.
struct EstimationModelData {
  NetworkModel network;                  ///< area network only
  std::vector<GeneratorUnit> generators; ///< set points must be filled in
  std::vector<KnownLoad> loads;
  std::vector<int> unknown_buses;        ///< buses whose injection is unmodeled
  std::vector<Pmu> pmus;
  NoiseSettings noise;
};

/// Incomplete DAE model of a power-system area in rectangular coordinates:
/// two-axis machines with DC1A exciters and TGOV1 governors, nodal current
/// balance at every bus whose injectors are all known.
class PowerSystemModel final : public DescriptorModel {
 public:
  explicit PowerSystemModel(EstimationModelData data);

  int differential_size() const override { return map_.differential_size(); }
  int algebraic_size() const override { return map_.algebraic_size(); }
  int equation_size() const override {
    return 2 * static_cast<int>(modeled_rows_.size());
  }

  Vector differential_rhs(const Vector& y, const Vector& v) const override;
  Vector algebraic_residual(const Vector& y, const Vector& v) const override;
  ModelJacobians jacobians(const Vector& y, const Vector& v) const override;
  PointEvaluation evaluate(const Vector& y, const Vector& v) const override;
  /// Limiter modes, kUnitLimiters per generator in generator order.
  SwitchingMode switching_mode(const Vector& y, const Vector& v) const override;
  PointEvaluation evaluate(const Vector& y, const Vector& v,
                           const SwitchingMode& mode) const override;

  const Matrix& measurement_matrix() const override { return c2_; }
  const Matrix& differential_noise() const override { return noise_.q_d; }
  const Matrix& algebraic_noise() const override { return noise_.q_a; }
  const Matrix& measurement_noise() const override { return noise_.r; }

  const StateIndexMap& index_map() const { return map_; }
  const NetworkModel& network() const { return data_.network; }
  const std::vector<GeneratorUnit>& generators() const {
    return data_.generators;
  }
  const std::vector<KnownLoad>& loads() const { return data_.loads; }
  const std::vector<Pmu>& pmus() const { return data_.pmus; }
  const std::vector<int>& unknown_buses() const { return data_.unknown_buses; }
  bool is_unknown(int bus_id) const;
  /// Bus positions (network order) that carry current-balance rows.
  const std::vector<int>& modeled_bus_positions() const { return modeled_rows_; }
  /// Bus positions with at least one known dynamic or static device.
  std::vector<int> device_bus_positions() const;

  /// Structural pattern of d g/d v augmented with zero rows for unknown
  /// buses (2 n_bus x 2 n_bus, interleaved ordering). Entries follow the
  /// G/B rule for off-diagonal blocks; diagonal blocks of connected or
  /// device buses are full.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> augmented_e4_pattern()
      const;

  /// Flat start for the algebraic states (1 + j0 at every bus).
  Vector flat_start_voltages() const;

 private:
  void evaluate_into(const Vector& y, const Vector& v, Vector* f, Vector* g,
                     ModelJacobians* jac, const SwitchingMode* hold = nullptr,
                     SwitchingMode* observed = nullptr) const;

  EstimationModelData data_;
  StateIndexMap map_;
  NoiseModel noise_;
  Matrix ybus_real_;
  Matrix c2_;
  std::vector<int> modeled_rows_;
  std::vector<int> row_of_bus_;   // bus position -> row pair or -1
  std::vector<int> gen_bus_pos_;
  std::vector<int> load_bus_pos_;
  double omega_s_ = 0.0;
};

}  // namespace dse
