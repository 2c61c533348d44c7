#pragma once

#include "cflab/adjacency.hpp"
#include "cflab/model.hpp"

namespace cflab {

// An encoder maps the embedding tables to the full user/item representation
// matrices. Forward is read-only on the state; backward maps a gradient with
// respect to the representations back onto the tables.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual void forward(const ModelState& state, Matrix& users, Matrix& items) const = 0;
  virtual void backward(const Matrix& d_users, const Matrix& d_items, Matrix& d_user_emb,
                        Matrix& d_item_emb) const = 0;
  // True when backward spreads gradients to every row (graph propagation).
  virtual bool densifies_gradients() const = 0;
};

// Plain lookup: representations are the tables themselves.
class MfEncoder final : public Encoder {
 public:
  void forward(const ModelState& state, Matrix& users, Matrix& items) const override;
  void backward(const Matrix& d_users, const Matrix& d_items, Matrix& d_user_emb,
                Matrix& d_item_emb) const override;
  bool densifies_gradients() const override { return false; }
};

// L layers of propagation over the normalized adjacency with a uniform
// 1/(L+1) layer mean: E^0 = tables, E^l = A E^(l-1), out = mean(E^0..E^L).
// The propagation is linear and A is symmetric, so backward is the same
// propagation applied to the output gradient.
class LightGcnEncoder final : public Encoder {
 public:
  LightGcnEncoder(NormalizedAdjacency adjacency, int layers);

  void forward(const ModelState& state, Matrix& users, Matrix& items) const override;
  void backward(const Matrix& d_users, const Matrix& d_items, Matrix& d_user_emb,
                Matrix& d_item_emb) const override;
  bool densifies_gradients() const override { return layers_ > 0; }

  int layers() const { return layers_; }

 private:
  void propagate(const Matrix& users_in, const Matrix& items_in, Matrix& users_out, Matrix& items_out) const;

  NormalizedAdjacency adj_;
  int layers_;
};

}  // namespace cflab
