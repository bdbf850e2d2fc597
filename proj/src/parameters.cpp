#include "mmft/parameters.hpp"

#include <stdexcept>

namespace mmft {

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const std::size_t index = params_.size();
  params_.push_back(std::make_unique<Parameter>(name, std::move(init), index));
  by_name_.emplace(name, index);
  return *params_.back();
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : params_[it->second].get();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::vector<Matrix> ParameterStore::zero_like() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  return out;
}

std::vector<Matrix> ParameterStore::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterStore::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (shape_of(values[i]) != params_[i]->shape()) {
      throw DimensionError("restore: shape mismatch for " + params_[i]->name());
    }
    params_[i]->value = values[i];
  }
}

Matrix truncated_normal(Index rows, Index cols, Scalar stddev, std::mt19937_64& rng) {
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) {
    Scalar z = normal(rng);
    while (std::abs(z) > 2.0) z = normal(rng);
    out.data()[i] = z * stddev;
  }
  return out;
}

}  // namespace mmft
