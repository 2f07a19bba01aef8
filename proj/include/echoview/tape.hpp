#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "echoview/common.hpp"
#include "echoview/tensor.hpp"

namespace echoview {

// A tensor in a recorded computation. `grad` is null when the value was
// produced outside a tape (inference-only forward).
template <typename T>
struct VarT {
  std::shared_ptr<TensorT<T>> value;
  std::shared_ptr<TensorT<T>> grad;

  bool tracked() const { return grad != nullptr; }
};

// Reverse-mode tape. Ops append one backward closure per executed
// operation; backward() replays them in exact reverse execution order.
// Every closure accumulates with += so values feeding several consumers
// collect the sum of their downstream gradients.
template <typename T>
class GradTapeT {
 public:
  // Wraps existing storage; the gradient starts at zero. Tracking the same
  // storage again returns the same gradient slot, so a value reused across
  // several consumers accumulates one combined gradient.
  VarT<T> track(std::shared_ptr<TensorT<T>> value) {
    auto it = slots_.find(value.get());
    if (it != slots_.end()) return {std::move(value), it->second};
    auto grad = std::make_shared<TensorT<T>>(value->shape());
    slots_.emplace(value.get(), grad);
    return {std::move(value), std::move(grad)};
  }

  VarT<T> track(TensorT<T> value) {
    return track(std::make_shared<TensorT<T>>(std::move(value)));
  }

  // Gradient slot for tracked storage; null when never tracked.
  std::shared_ptr<TensorT<T>> grad_of(const TensorT<T>* value) const {
    auto it = slots_.find(value);
    return it == slots_.end() ? nullptr : it->second;
  }

  void record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

  size_t recorded() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape backwards. One-shot:
  // replaying twice would double-accumulate into leaf gradients.
  void backward(const VarT<T>& loss) {
    require(!nodes_.empty(), Errc::bad_argument, "backward requires a recorded forward pass");
    require(!replayed_, Errc::bad_argument, "tape already replayed");
    require(loss.value && loss.value->size() == 1, Errc::shape_mismatch,
            "backward expects a scalar loss");
    require(loss.tracked(), Errc::bad_argument, "loss was recorded without a tape");
    replayed_ = true;
    (*loss.grad)[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  bool guided_relu() const { return guided_relu_; }
  void set_guided_relu(bool on) { guided_relu_ = on; }

 private:
  std::vector<std::function<void()>> nodes_;
  std::unordered_map<const TensorT<T>*, std::shared_ptr<TensorT<T>>> slots_;
  bool guided_relu_ = false;
  bool replayed_ = false;
};

using GradTape = GradTapeT<float>;
using Var = VarT<float>;

}  // namespace echoview
