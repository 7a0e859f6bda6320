#pragma once

#include <functional>
#include <vector>

#include "cpgan/tensor.hpp"

namespace cpgan {

// Tape of backward closures in forward order. Ops record onto the ambient
// graph (if any) and backward() replays in reverse, which is a valid
// topological order because each op only mentioned tensors that already
// existed when it ran.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph*& current() {
    thread_local Graph* g = nullptr;
    return g;
  }

  // Activates a graph for the enclosing scope. Nesting restores the outer
  // graph on exit.
  class Scope {
   public:
    explicit Scope(Graph& g) : prev_(current()) { current() = &g; }
    ~Scope() { current() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* prev_;
  };

  void record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }

  // Marks a tensor whose grad buffer this tape may write, so clear() can
  // zero it without tracking live parameter sets elsewhere.
  void touch(const Tensor<T>& t) {
    if (t.requires_grad()) touched_.push_back(t);
  }

  std::size_t size() const { return entries_.size(); }

  void backward(Tensor<T>& root) {
    require(root.numel() == 1, "backward root must be scalar, got shape ",
            shape_str(root.shape()));
    require(root.requires_grad(), "backward root does not require grad");
    root.grad()[0] = T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

  // Drops the tape and zeroes every grad it may have written. Values are
  // left intact.
  void clear() {
    entries_.clear();
    for (auto& t : touched_)
      if (t.requires_grad()) t.zero_grad();
    touched_.clear();
  }

 private:
  std::vector<std::function<void()>> entries_;
  std::vector<Tensor<T>> touched_;
};

template <typename T>
bool tape_active() {
  return Graph<T>::current() != nullptr;
}

}  // namespace cpgan
