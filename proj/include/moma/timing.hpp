#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>

namespace moma {

// Process-wide phase timing registry. Disabled by default; when disabled the
// scopes cost one branch. Accumulates (seconds, count) per phase name.
class PhaseTimers {
 public:
  struct Entry {
    double seconds = 0.0;
    long count = 0;
  };

  static PhaseTimers& global();

  void enable(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }
  void reset();
  void add(const std::string& phase, double seconds);
  std::map<std::string, Entry> snapshot() const;

  class Scope {
   public:
    Scope(PhaseTimers& timers, std::string phase)
        : timers_(timers), phase_(std::move(phase)), start_(clock::now()) {}
    ~Scope() {
      if (timers_.enabled()) {
        timers_.add(phase_, std::chrono::duration<double>(clock::now() - start_).count());
      }
    }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    using clock = std::chrono::steady_clock;
    PhaseTimers& timers_;
    std::string phase_;
    clock::time_point start_;
  };

  Scope scope(std::string phase) { return Scope(*this, std::move(phase)); }

 private:
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
  bool enabled_ = false;
};

}  // namespace moma
