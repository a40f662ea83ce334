#ifndef QPOT3D_HEAP_HPP_
#define QPOT3D_HEAP_HPP_

// Indexed binary min-heap over node indices, keyed by an external value
// array. Positions are tracked so a lowered key can be sifted up in place.
// Ties are broken by the smaller node index, which makes the pop order
// deterministic.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qpot3d {

class IndexedMinHeap {
 public:
  static constexpr std::uint32_t kAbsent =
      std::numeric_limits<std::uint32_t>::max();

  /// keys must outlive the heap and have one entry per node.
  IndexedMinHeap(std::vector<double> const& keys)
      : keys_(&keys), pos_(keys.size(), kAbsent) {}

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  bool contains(std::size_t node) const { return pos_.at(node) != kAbsent; }

  std::size_t top() const {
    if (heap_.empty()) {
      throw std::logic_error("IndexedMinHeap: top of empty heap");
    }
    return heap_.front();
  }

  void push(std::size_t node) {
    if (contains(node)) {
      throw std::logic_error("IndexedMinHeap: node already queued");
    }
    heap_.push_back(static_cast<std::uint32_t>(node));
    pos_[node] = static_cast<std::uint32_t>(heap_.size() - 1);
    sift_up(heap_.size() - 1);
  }

  /// Restores heap order after keys[node] decreased.
  void decrease(std::size_t node) {
    std::uint32_t const p = pos_.at(node);
    if (p == kAbsent) {
      throw std::logic_error("IndexedMinHeap: node not queued");
    }
    sift_up(p);
  }

  std::size_t pop() {
    if (heap_.empty()) {
      throw std::logic_error("IndexedMinHeap: pop from empty heap");
    }
    std::uint32_t const out = heap_.front();
    std::uint32_t const last = heap_.back();
    heap_.pop_back();
    pos_[out] = kAbsent;
    if (!heap_.empty()) {
      heap_[0] = last;
      pos_[last] = 0;
      sift_down(0);
    }
    return out;
  }

 private:
  bool less(std::uint32_t a, std::uint32_t b) const {
    double const ka = (*keys_)[a];
    double const kb = (*keys_)[b];
    return ka < kb || (ka == kb && a < b);
  }

  void place(std::size_t i, std::uint32_t node) {
    heap_[i] = node;
    pos_[node] = static_cast<std::uint32_t>(i);
  }

  void sift_up(std::size_t i) {
    std::uint32_t const node = heap_[i];
    while (i > 0) {
      std::size_t const parent = (i - 1) / 2;
      if (!less(node, heap_[parent])) {
        break;
      }
      place(i, heap_[parent]);
      i = parent;
    }
    place(i, node);
  }

  void sift_down(std::size_t i) {
    std::uint32_t const node = heap_[i];
    std::size_t const n = heap_.size();
    for (;;) {
      std::size_t child = 2 * i + 1;
      if (child >= n) {
        break;
      }
      if (child + 1 < n && less(heap_[child + 1], heap_[child])) {
        ++child;
      }
      if (!less(heap_[child], node)) {
        break;
      }
      place(i, heap_[child]);
      i = child;
    }
    place(i, node);
  }

  std::vector<double> const* keys_;
  std::vector<std::uint32_t> heap_;
  std::vector<std::uint32_t> pos_;
};

}  // namespace qpot3d

#endif  // QPOT3D_HEAP_HPP_
