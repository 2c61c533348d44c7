#include "cflab/model.hpp"

#include <nlohmann/json.hpp>

namespace cflab {

ModelState ModelState::create(Index num_users, Index num_items, Index dim, Index user_pop_buckets,
                              Index item_pop_buckets) {
  ModelState s;
  s.user_emb = Matrix::Zero(num_users, dim);
  s.item_emb = Matrix::Zero(num_items, dim);
  s.user_margin = Matrix::Zero(num_users, 1);
  s.item_margin = Matrix::Zero(num_items, 1);
  s.boundary_proj = Matrix::Zero(dim, 1);
  s.pop_user_emb = Matrix::Zero(user_pop_buckets, dim);
  s.pop_item_emb = Matrix::Zero(item_pop_buckets, dim);
  return s;
}

std::vector<std::pair<std::string, Matrix*>> ModelState::named_tensors() {
  return {{"user_emb", &user_emb},         {"item_emb", &item_emb},
          {"user_margin", &user_margin},   {"item_margin", &item_margin},
          {"boundary_proj", &boundary_proj}, {"pop_user_emb", &pop_user_emb},
          {"pop_item_emb", &pop_item_emb}};
}

std::vector<std::pair<std::string, const Matrix*>> ModelState::named_tensors() const {
  return {{"user_emb", &user_emb},         {"item_emb", &item_emb},
          {"user_margin", &user_margin},   {"item_margin", &item_margin},
          {"boundary_proj", &boundary_proj}, {"pop_user_emb", &pop_user_emb},
          {"pop_item_emb", &pop_item_emb}};
}

std::string tensors_to_json(const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
  nlohmann::json j;
  j["version"] = 1;
  for (const auto& [name, m] : tensors) {
    nlohmann::json t;
    t["rows"] = m->rows();
    t["cols"] = m->cols();
    std::vector<double> data(m->data(), m->data() + m->size());  // row-major
    t["data"] = std::move(data);
    j["tensors"][name] = std::move(t);
  }
  return j.dump();
}

void tensors_from_json(const std::string& text, const std::vector<std::pair<std::string, Matrix*>>& tensors) {
  nlohmann::json j = nlohmann::json::parse(text);
  for (const auto& [name, m] : tensors) {
    const auto& t = j.at("tensors").at(name);
    const Index rows = t.at("rows").get<Index>();
    const Index cols = t.at("cols").get<Index>();
    const auto& data = t.at("data");
    if (static_cast<Index>(data.size()) != rows * cols)
      throw DataError("tensor " + name + ": shape/data mismatch");
    m->resize(rows, cols);
    for (Index k = 0; k < rows * cols; ++k) m->data()[k] = data[static_cast<std::size_t>(k)].get<double>();
  }
}

}  // namespace cflab
