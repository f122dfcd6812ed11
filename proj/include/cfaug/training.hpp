#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfaug/corpus.hpp"
#include "cfaug/disae.hpp"

namespace cfaug {

class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainConfig {
  double learning_rate = 5e-4;  // decays linearly to 0 over all steps
  int batch_size = 32;
  int epochs = 20;
  double anneal_fraction = 0.2;  // used when anneal_steps == 0
  int anneal_steps = 0;
  double alpha_max = 5.0;
  double beta_max = 1.0;
  double gamma_max = 1.0;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // steps; 0 writes only the final checkpoint
  std::filesystem::path checkpoint_path;

  void validate() const;
};

struct TrainStep {
  int step = 0;
  double lr = 0.0;
  LossWeights weights;
  LossBreakdown loss;  // batch means
};

struct TrainReport {
  std::vector<TrainStep> history;
  std::filesystem::path checkpoint;
  double seconds = 0.0;
};

/// Linear ramp min(step / anneal_steps, 1) * cap.
double anneal_weight(long step, double cap, long anneal_steps);

long total_steps(std::size_t examples, const TrainConfig& config);
long resolve_anneal_steps(long total, const TrainConfig& config);

/// One JSON line per step: step, lr, alpha, beta, gamma, L_rec ... total.
nlohmann::json step_record(const TrainStep& s);

/// Adam with bias correction over every tensor of DisAEParams.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(const DisAEParams<Scalar>& like, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(DisAEParams<Scalar>& params, const DisAEParams<Scalar>& grads, double lr);

 private:
  DisAEParams<Scalar> m_;
  DisAEParams<Scalar> v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Scales grads in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(DisAEParams<Scalar>& grads, double max_norm);

/// Optimizes the full pair objective with annealed alpha/beta/gamma.
template <typename Scalar>
TrainReport train(DisAEModel<Scalar>& model, const Vocabulary& vocab,
                  const std::vector<CounterfactualPair>& pairs, const TrainConfig& config,
                  std::ostream* progress = nullptr);

/// Same loop on pre-tokenized pairs (no checkpointing).
template <typename Scalar>
TrainReport train_on_ids(DisAEModel<Scalar>& model, const std::vector<PairIds>& pairs,
                         const TrainConfig& config, std::ostream* progress = nullptr);

/// Reconstruction-only autoencoder training on single texts; this is how the
/// mean-latent summarizer is fit on an (optionally augmented) review corpus.
template <typename Scalar>
TrainReport train_reconstruction(DisAEModel<Scalar>& model, const Vocabulary& vocab,
                                 const std::vector<std::string>& texts, const TrainConfig& config,
                                 std::ostream* progress = nullptr);

}  // namespace cfaug
