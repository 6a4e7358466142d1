// Time-sampled sequences of field snapshots.
#pragma once

#include "dkg/field.hpp"
#include "dkg/grid.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkg {

/// Snapshots at every node of a uniform time grid; rates (d/dt) where produced.
template <class F>
struct Trajectory {
  TimeGrid times;
  std::vector<F> values;
  std::map<std::size_t, F> rates;

  std::size_t size() const { return values.size(); }
  const Grid& grid() const {
    if (values.empty()) throw std::logic_error("trajectory: empty");
    return values.front().grid();
  }
  double time(std::size_t k) const { return times.time(k); }
  const F& rate(std::size_t k) const {
    auto it = rates.find(k);
    if (it == rates.end()) throw std::out_of_range("trajectory: no time derivative stored at node " + std::to_string(k));
    return it->second;
  }
  bool has_rate(std::size_t k) const { return rates.count(k) != 0; }
};

using SpinorTrajectory = Trajectory<SpinorField>;
using ScalarTrajectory = Trajectory<ScalarField>;

}  // namespace dkg
