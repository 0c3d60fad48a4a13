#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "onnkit/autograd.hpp"
#include "onnkit/oplib.hpp"
#include "onnkit/patchops.hpp"
#include "onnkit/tensor.hpp"

namespace onnkit {

enum class InitKind {
  Uniform,      // U(-bound, bound)
  FanInUniform  // U(-k, k), k = 1 / sqrt(C_in * m * n); bound is ignored
};

struct InitSpec {
  InitKind kind = InitKind::Uniform;
  double bound = 0.1;

  friend bool operator==(const InitSpec&, const InitSpec&) = default;
};

struct TierSpec {
  std::size_t neurons = 1;
  std::size_t kernel = 3;
  int sampling = 1;
  /// Either one operator-set index shared by every neuron, or one per neuron.
  std::vector<std::size_t> operators{0};

  friend bool operator==(const TierSpec&, const TierSpec&) = default;
};

struct NetworkSpec {
  std::size_t in_channels = 1;
  std::vector<TierSpec> tiers;
};

/// One operational neuron: weights [C_in, m, n], a scalar bias and the index
/// of its operator set.
struct OpBlock {
  Tensor weights;
  Tensor bias = Tensor::zeros({1});
  std::size_t operator_set = 0;
};

struct OpTier {
  std::size_t in_channels = 1;
  std::size_t kernel = 3;
  int sampling = 1;
  std::vector<OpBlock> blocks;
};

/// Block output [M, N] from the tier's shared unfolded input [C_in, M*N, m*n]:
/// f(vec^-1(sum_c phi(psi(w_c, Y_c))) - b).
ag::Variable block_forward(const OperatorSetLibrary& library,
                           std::size_t operator_set, const ag::Variable& weights,
                           const ag::Variable& bias, const ag::Variable& patches,
                           std::size_t height, std::size_t width);

class OpNetwork {
 public:
  OpNetwork(const NetworkSpec& spec,
            std::shared_ptr<const OperatorSetLibrary> library);

  std::size_t in_channels() const noexcept { return in_channels_; }
  const std::vector<OpTier>& tiers() const noexcept { return tiers_; }
  const OperatorSetLibrary& library() const noexcept { return *library_; }
  std::shared_ptr<const OperatorSetLibrary> library_ptr() const noexcept {
    return library_;
  }
  NetworkSpec spec() const;

  std::size_t parameter_count() const;

  /// [K, M', N'] per tier for an input of the given spatial size.
  std::vector<Shape> output_shapes(std::size_t height, std::size_t width) const;

  void reset_parameters(std::uint64_t seed, const InitSpec& init = {});

  /// Weights then bias for every block, tier-major.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  /// Leaves for every parameter on `tape`, in parameters() order.
  std::vector<ag::Variable> bind(ag::Tape& tape) const;

  /// One sample [C_in, M, N] -> [K_last, M_out, N_out].
  ag::Variable forward(std::span<const ag::Variable> params,
                       const ag::Variable& input) const;
  ag::Variable tier_forward(std::size_t tier,
                            std::span<const ag::Variable> params,
                            const ag::Variable& input) const;

  /// Untracked batch inference [B, C_in, M, N] -> [B, K, M_out, N_out].
  Tensor predict(const Tensor& batch) const;
  Tensor predict_one(const Tensor& sample) const;

 private:
  std::shared_ptr<const UnfoldPlan> plan_for(std::size_t tier, std::size_t height,
                                             std::size_t width) const;
  std::size_t param_offset(std::size_t tier) const;

  std::size_t in_channels_;
  std::vector<OpTier> tiers_;
  std::shared_ptr<const OperatorSetLibrary> library_;

  struct PlanCache {
    std::mutex mutex;
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>,
             std::shared_ptr<const UnfoldPlan>>
        plans;
  };
  std::shared_ptr<PlanCache> plans_ = std::make_shared<PlanCache>();
};

}  // namespace onnkit
