#include "moma/timing.hpp"

namespace moma {

PhaseTimers& PhaseTimers::global() {
  static PhaseTimers timers;
  return timers;
}

void PhaseTimers::reset() {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.clear();
}

void PhaseTimers::add(const std::string& phase, double seconds) {
  std::lock_guard<std::mutex> lock(mu_);
  Entry& e = entries_[phase];
  e.seconds += seconds;
  ++e.count;
}

std::map<std::string, PhaseTimers::Entry> PhaseTimers::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

}  // namespace moma
