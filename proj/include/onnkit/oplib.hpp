#pragma once

#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onnkit/autograd.hpp"

namespace onnkit {

/// Fixed shape constants used by the built-in operators.
struct OplibConstants {
  double k_sin = std::numbers::pi;
  double k_chirp = std::numbers::pi;
  double cut = 10.0;

  friend bool operator==(const OplibConstants&, const OplibConstants&) = default;
};

/// psi(w, y): elementwise over the broadcast of weights and patches.
using NodalFn =
    std::function<ag::Variable(const ag::Variable& w, const ag::Variable& y)>;
/// phi(Z): reduces the trailing (patch) axis.
using PoolFn = std::function<ag::Variable(const ag::Variable& z)>;
/// f(x, b): pointwise with a broadcast bias.
using ActivationFn =
    std::function<ag::Variable(const ag::Variable& x, const ag::Variable& b)>;

struct NodalOp {
  std::string name;
  NodalFn forward;
};

struct PoolOp {
  std::string name;
  PoolFn forward;
};

struct ActivationOp {
  std::string name;
  ActivationFn forward;
};

enum class OperatorKind { Nodal, Pool, Activation };

/// Indices into the library's nodal/pool/activation lists.
struct OperatorSet {
  std::size_t index = 0;
  std::size_t nodal = 0;
  std::size_t pool = 0;
  std::size_t activation = 0;

  friend bool operator==(const OperatorSet&, const OperatorSet&) = default;
};

namespace ops {

NodalOp mul();
NodalOp cubic();
NodalOp sine(double k_sin);
NodalOp exp();
NodalOp sinh();
NodalOp chirp(double k_chirp);

PoolOp sum();
/// Median scaled by the patch length.
PoolOp median();
/// Max scaled by the patch length.
PoolOp max();

ActivationOp tanh();
ActivationOp lincut(double cut);
ActivationOp identity();

}  // namespace ops

/// Registry of nodal, pool and activation operators and the enumeration of
/// operator sets built from them.
///
/// The lists passed at construction are enumerated nodal-major, then pool,
/// then activation. Operators added afterwards only append new sets, so
/// existing set indices never move.
class OperatorSetLibrary {
 public:
  OperatorSetLibrary(std::vector<NodalOp> nodal, std::vector<PoolOp> pool,
                     std::vector<ActivationOp> activation,
                     OplibConstants constants = {});

  /// mul, cubic, sine, exp, sinh, chirp / sum, median, max / tanh, lincut,
  /// followed by an appended identity activation.
  static OperatorSetLibrary builtin(const OplibConstants& constants = {});

  /// Number of sets formed by the core lists (tanh/lincut activations only).
  static constexpr std::size_t kCoreSetCount = 36;

  void add_nodal(std::string name, NodalFn forward);
  void add_nodal(std::string name, ag::CustomBackward custom);
  /// Rejects a forward that does not drop exactly the trailing axis.
  void add_pool(std::string name, PoolFn forward);
  void add_pool(std::string name, ag::CustomBackward custom);
  void add_activation(std::string name, ActivationFn forward);
  void add_activation(std::string name, ag::CustomBackward custom);

  std::size_t size() const noexcept { return sets_.size(); }
  const OperatorSet& set(std::size_t index) const;
  std::span<const OperatorSet> sets() const noexcept { return sets_; }
  std::size_t index_of(std::size_t nodal, std::size_t pool,
                       std::size_t activation) const;
  std::size_t index_of(std::string_view nodal, std::string_view pool,
                       std::string_view activation) const;
  std::string describe(std::size_t index) const;

  const std::vector<NodalOp>& nodal() const noexcept { return nodal_; }
  const std::vector<PoolOp>& pool() const noexcept { return pool_; }
  const std::vector<ActivationOp>& activation() const noexcept {
    return activation_;
  }
  const OplibConstants& constants() const noexcept { return constants_; }

 private:
  void append_set(std::size_t n, std::size_t p, std::size_t a);

  std::vector<NodalOp> nodal_;
  std::vector<PoolOp> pool_;
  std::vector<ActivationOp> activation_;
  std::vector<OperatorSet> sets_;
  OplibConstants constants_;
};

ag::Variable evaluate_nodal(const NodalOp& op, const ag::Variable& weights,
                            const ag::Variable& patches);
ag::Variable evaluate_pool(const PoolOp& op, const ag::Variable& z);
ag::Variable evaluate_activation(const ActivationOp& op, const ag::Variable& x,
                                 const ag::Variable& bias);

}  // namespace onnkit
