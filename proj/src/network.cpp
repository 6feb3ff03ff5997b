#include "dse/network.hpp"

#include <queue>
#include <stdexcept>

namespace dse {

BranchAdmittance Branch::admittance() const {
  const Complex ys = series_admittance();
  const Complex half_charging(0.0, b / 2.0);
  const double t = ratio == 0.0 ? 1.0 : ratio;
  return {(ys + half_charging) / (t * t), -ys / t, -ys / t, ys + half_charging};
}

NetworkModel::NetworkModel(std::vector<Bus> buses, std::vector<Branch> branches,
                           double base_mva, double frequency_hz)
    : buses_(std::move(buses)),
      branches_(std::move(branches)),
      base_mva_(base_mva),
      frequency_hz_(frequency_hz) {
  for (int i = 0; i < bus_count(); ++i) {
    if (!index_.emplace(buses_[i].id, i).second) {
      throw std::invalid_argument("duplicate bus id " +
                                  std::to_string(buses_[i].id));
    }
  }
  for (const Branch& br : branches_) {
    if (!has_bus(br.from) || !has_bus(br.to)) {
      throw std::invalid_argument("branch " + std::to_string(br.from) + "-" +
                                  std::to_string(br.to) +
                                  " references an unknown bus");
    }
    if (br.from == br.to) throw std::invalid_argument("branch is a self loop");
    if (br.r == 0.0 && br.x == 0.0) {
      throw std::invalid_argument("branch has zero impedance");
    }
  }
  build_admittance();
}

int NetworkModel::index_of(int id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    throw std::out_of_range("unknown bus " + std::to_string(id));
  }
  return it->second;
}

std::optional<std::size_t> NetworkModel::find_branch(int a, int b) const {
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const Branch& br = branches_[i];
    if (!br.in_service) continue;
    if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) return i;
  }
  return std::nullopt;
}

void NetworkModel::build_admittance() {
  const int n = bus_count();
  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(4 * branches_.size() + n);
  for (int i = 0; i < n; ++i) {
    if (buses_[i].shunt != Complex(0.0, 0.0)) {
      trips.emplace_back(i, i, buses_[i].shunt);
    }
  }
  for (const Branch& br : branches_) {
    if (!br.in_service) continue;
    const int f = index_of(br.from);
    const int t = index_of(br.to);
    const BranchAdmittance y = br.admittance();
    trips.emplace_back(f, f, y.ff);
    trips.emplace_back(f, t, y.ft);
    trips.emplace_back(t, f, y.tf);
    trips.emplace_back(t, t, y.tt);
  }
  ybus_.resize(n, n);
  ybus_.setFromTriplets(trips.begin(), trips.end());
}

NetworkModel NetworkModel::subnetwork(const std::vector<int>& bus_ids) const {
  std::vector<Bus> buses;
  std::unordered_map<int, bool> keep;
  for (int id : bus_ids) {
    buses.push_back(buses_[index_of(id)]);
    keep[id] = true;
  }
  std::vector<Branch> branches;
  for (const Branch& br : branches_) {
    if (keep.count(br.from) && keep.count(br.to)) branches.push_back(br);
  }
  return NetworkModel(std::move(buses), std::move(branches), base_mva_,
                      frequency_hz_);
}

std::vector<std::vector<int>> NetworkModel::adjacency() const {
  std::vector<std::vector<int>> adj(bus_count());
  for (const Branch& br : branches_) {
    if (!br.in_service) continue;
    const int f = index_of(br.from);
    const int t = index_of(br.to);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  return adj;
}

bool NetworkModel::is_connected() const {
  if (buses_.empty()) return true;
  const auto adj = adjacency();
  std::vector<bool> seen(bus_count(), false);
  std::queue<int> todo;
  todo.push(0);
  seen[0] = true;
  int count = 1;
  while (!todo.empty()) {
    const int u = todo.front();
    todo.pop();
    for (int w : adj[u]) {
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        todo.push(w);
      }
    }
  }
  return count == bus_count();
}

Matrix real_expansion(const ComplexMatrix& y) {
  const auto n = y.rows();
  const auto m = y.cols();
  Matrix out(2 * n, 2 * m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double g = y(i, j).real();
      const double b = y(i, j).imag();
      out(2 * i, 2 * j) = g;
      out(2 * i, 2 * j + 1) = -b;
      out(2 * i + 1, 2 * j) = b;
      out(2 * i + 1, 2 * j + 1) = g;
    }
  }
  return out;
}

}  // namespace dse
