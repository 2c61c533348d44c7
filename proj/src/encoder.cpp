#include "cflab/encoder.hpp"

namespace cflab {

void MfEncoder::forward(const ModelState& state, Matrix& users, Matrix& items) const {
  users = state.user_emb;
  items = state.item_emb;
}

void MfEncoder::backward(const Matrix& d_users, const Matrix& d_items, Matrix& d_user_emb,
                         Matrix& d_item_emb) const {
  d_user_emb = d_users;
  d_item_emb = d_items;
}

LightGcnEncoder::LightGcnEncoder(NormalizedAdjacency adjacency, int layers)
    : adj_(std::move(adjacency)), layers_(layers) {
  if (layers < 0) throw ConfigError("LightGcnEncoder: layers must be >= 0");
}

void LightGcnEncoder::propagate(const Matrix& users_in, const Matrix& items_in, Matrix& users_out,
                                Matrix& items_out) const {
  const Index nu = adj_.num_users;
  const Index ni = adj_.num_items;
  const Index d = users_in.cols();

  Matrix stacked(nu + ni, d);
  stacked.topRows(nu) = users_in;
  stacked.bottomRows(ni) = items_in;

  Matrix acc = stacked;
  Matrix layer = stacked;
  for (int l = 0; l < layers_; ++l) {
    layer = adj_.matrix * layer;
    acc += layer;
  }
  acc /= static_cast<double>(layers_ + 1);

  users_out = acc.topRows(nu);
  items_out = acc.bottomRows(ni);
}

void LightGcnEncoder::forward(const ModelState& state, Matrix& users, Matrix& items) const {
  if (state.num_users() != adj_.num_users || state.num_items() != adj_.num_items)
    throw ConfigError("LightGcnEncoder: state shape does not match the adjacency");
  propagate(state.user_emb, state.item_emb, users, items);
}

void LightGcnEncoder::backward(const Matrix& d_users, const Matrix& d_items, Matrix& d_user_emb,
                               Matrix& d_item_emb) const {
  propagate(d_users, d_items, d_user_emb, d_item_emb);
}

}  // namespace cflab
