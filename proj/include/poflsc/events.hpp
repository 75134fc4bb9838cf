#pragma once

#include <cstdint>
#include <queue>
#include <vector>

#include "poflsc/types.hpp"

namespace poflsc {

enum class EventKind : std::uint8_t {
  kUpdateArrival = 0,
  kChallenge = 1,
  kAudit = 2,
  kSubBlockEnd = 3,
};

struct EventRecord {
  Millis at = 0.0;
  EventKind kind = EventKind::kUpdateArrival;
  MinerId actor;
  std::uint64_t payload = 0;
  std::uint64_t seq = 0;  // insertion order, breaks full-key ties
};

// Min-queue ordered by (at, actor, kind, seq).
class EventQueue {
 public:
  void push(Millis at, EventKind kind, MinerId actor, std::uint64_t payload = 0) {
    heap_.push(EventRecord{at, kind, actor, payload, next_seq_++});
  }
  EventRecord pop() {
    EventRecord e = heap_.top();
    heap_.pop();
    return e;
  }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const EventRecord& a, const EventRecord& b) const {
      if (a.at != b.at) return a.at > b.at;
      if (a.actor != b.actor) return a.actor > b.actor;
      if (a.kind != b.kind) return a.kind > b.kind;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<EventRecord, std::vector<EventRecord>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace poflsc
