#pragma once

#include "mmft/diffcore.hpp"

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mmft {

/// A trainable array with a hierarchical name ("encoder.q.layer0.attn.wq").
class Parameter {
 public:
  Parameter(std::string name, Matrix init, std::size_t index)
      : name_(std::move(name)), index_(index), value(std::move(init)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}

  const std::string& name() const { return name_; }
  std::size_t index() const { return index_; }
  Shape shape() const { return shape_of(value); }


 private:
  std::string name_;
  std::size_t index_;

 public:
  Matrix value;
  Matrix grad;
};

/// Owns every parameter of a model. Addresses are stable for the lifetime of
/// the store; iteration order is registration order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  /// Throws std::invalid_argument on a duplicate name.
  Parameter& add(const std::string& name, Matrix init);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  std::size_t scalar_count() const;
  void zero_grad();

  /// Gradient buffers shaped like every parameter, all zero.
  std::vector<Matrix> zero_like() const;
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> by_name_;
};

// Initializers
Matrix truncated_normal(Index rows, Index cols, Scalar stddev, std::mt19937_64& rng);

}  // namespace mmft
