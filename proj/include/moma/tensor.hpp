#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace moma::nn {

// Dense double-precision tensor with value semantics over shared storage.
// Copying a Tensor copies the handle; clone() copies the buffers.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  // 2-D accessors; a 1-D tensor counts as a single row.
  int rows() const;
  int cols() const;
  std::size_t numel() const;
  bool is_scalar() const { return defined() && numel() == 1 && shape().size() <= 1; }

  bool requires_grad() const;
  void set_requires_grad(bool v);

  // Handle semantics: const applies to the handle, not the shared storage.
  std::vector<double>& values() const;

  bool has_grad() const;
  // Allocates a zero buffer on first access.
  std::vector<double>& grad() const;
  void zero_grad() const;
  void clear_grad() const;

  double item() const;
  double at(int r, int c) const;
  double& at(int r, int c);

  Tensor clone() const;
  bool all_finite() const;

  // Identity of the underlying storage; used for parameter bookkeeping.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty means absent
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  static Tensor wrap(std::shared_ptr<Impl> impl);
  Impl& impl() const;
};

// Reverse-mode tape. Ops append a backward closure in execution order;
// backward() replays them once in reverse. Gradients accumulate additively;
// the caller resets parameter grads between optimizer steps.
//
// Single-threaded per tape. Tapes over disjoint parameters may run
// concurrently; a grad-disabled tape never writes to any tensor it reads.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  // loss must be scalar; calling backward twice without clear() is an error.
  void backward(const Tensor& loss);

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor add_bias(const Tensor& x, const Tensor& bias);  // [m,n] + [n]
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  Tensor transpose(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor softmax(const Tensor& x, int axis);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double epsilon = 1e-6);
  Tensor embed_rows(const Tensor& table, const std::vector<int>& ids);
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor slice_rows(const Tensor& x, int begin, int end);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_cols(const Tensor& x, int begin, int end);
  Tensor reshape(const Tensor& x, std::vector<int> shape);
  Tensor sum(const Tensor& x);
  Tensor dot(const Tensor& a, const Tensor& b);
  Tensor nll_ranking_loss(const Tensor& pos_score,
                          const std::vector<Tensor>& neg_scores);

 private:
  struct Node {
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool backward_ran_ = false;

  bool track(std::initializer_list<const Tensor*> inputs) const;
  void record(std::function<void()> fn);
};

}  // namespace moma::nn
