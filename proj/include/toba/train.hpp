#pragma once

// Training loop: two-group AdamW (engram parameters get their own learning
// rate multiplier), warmup + cosine schedule, per-component gradient norms,
// a JSON-lines step log and binary checkpoints.
//
// Everything is a pure function of (configs, data, seed): the batch for a
// given step is derived from the seed and the step number alone, so a run
// resumed from a checkpoint replays the same record stream.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toba/backbone.hpp"
#include "toba/param.hpp"
#include "toba/tokenizer.hpp"

namespace toba::train {

using tok::TokenId;
using tok::TokenSequence;

enum class OptimizerKind { adamw, sgd };

struct TrainConfig {
  double base_lr = 3e-3;
  double engram_lr_multiplier = 5.0;
  std::size_t batch_size = 8;
  std::size_t grad_accum_steps = 1;
  std::size_t max_steps = 2000;
  std::uint64_t seed = 0;
  std::size_t warmup_steps = 100;
  double clip_norm = 0.0;            // global L2 clip; 0 disables
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;  // 0: only the initial and final ones
  // Falls back to the model config's precision when unset.
  std::optional<nn::Precision> precision;
  OptimizerKind optimizer = OptimizerKind::adamw;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double min_lr_ratio = 0.1;  // cosine floor as a fraction of base_lr
  bool log_wallclock = false;  // wallclock_ms is 0 unless set

  // Throws ConfigError.
  void validate() const;
};

// Backbone learning rate for `step` (0-based): linear warmup over
// warmup_steps, then cosine decay to min_lr_ratio * base_lr at max_steps.
double lr_at(const TrainConfig& cfg, std::size_t step);
inline double engram_lr_at(const TrainConfig& cfg, std::size_t step) {
  return lr_at(cfg, step) * cfg.engram_lr_multiplier;
}

struct TrainStepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr_backbone = 0.0;
  double lr_engram = 0.0;
  double grad_norm_engram = 0.0;
  double grad_norm_backbone = 0.0;
  std::int64_t wallclock_ms = 0;

  friend bool operator==(const TrainStepRecord&, const TrainStepRecord&) = default;
};

// L2 norm of the gradients of every parameter in `group`.
template <typename T>
double grad_norm(std::span<Param<T>* const> params, ParamGroup group);
template <typename T>
double grad_norm(const nn::ModelParams<T>& params, ParamGroup group);

template <typename T>
std::vector<Param<T>*> param_list(nn::ModelParams<T>& params);

// First and second moments per parameter, in param_list order.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  // One update of every parameter; the learning rate is picked by group.
  void step(std::span<Param<T>* const> params, double lr_backbone,
            double lr_engram);

  std::uint64_t updates() const noexcept { return t_; }
  std::vector<Matrix<T>>& first_moment() { return m_; }
  std::vector<Matrix<T>>& second_moment() { return v_; }
  const std::vector<Matrix<T>>& first_moment() const { return m_; }
  const std::vector<Matrix<T>>& second_moment() const { return v_; }
  void restore(std::uint64_t t, std::vector<Matrix<T>> m,
               std::vector<Matrix<T>> v);

 private:
  TrainConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

// Documents packed into one stream, each followed by <eos>, cut into
// windows of seq + 1 tokens with stride seq; the tail is dropped.
class TokenDataset {
 public:
  TokenDataset(const std::vector<TokenSequence>& docs, std::size_t seq);

  // One document per line, ids separated by spaces. Throws ParseError.
  static std::vector<TokenSequence> read_documents(const std::string& path);
  static void write_documents(const std::string& path,
                              const std::vector<TokenSequence>& docs);

  std::size_t seq() const noexcept { return seq_; }
  std::size_t num_windows() const noexcept { return windows_; }
  TokenId max_id() const noexcept { return max_id_; }

  // The window used as global sample `k`: epoch k / W is a fresh
  // permutation drawn from (seed, epoch).
  std::size_t window_for_sample(std::uint64_t seed, std::uint64_t k) const;

  // Inputs and shifted targets for samples [first, first + count).
  void fill(std::uint64_t seed, std::uint64_t first, std::size_t count,
            nn::TokenBatch& inputs, std::vector<TokenId>& targets) const;

 private:
  std::vector<TokenId> stream_;
  std::size_t seq_;
  std::size_t windows_;
  TokenId max_id_ = -1;
  mutable std::uint64_t cached_seed_ = 0;
  mutable std::uint64_t cached_epoch_ = ~0ULL;
  mutable std::vector<std::size_t> perm_;
};

// One optimizer step: forward/backward over grad_accum_steps micro-batches,
// gradient norms (before clipping), optional clipping, update. The record's
// loss is the pre-update mean loss. Throws NumericalDivergence on a
// non-finite loss or gradient.
template <typename T>
TrainStepRecord train_step(nn::ModelParams<T>& params,
                           const nn::ModelConfig& mcfg, Optimizer<T>& opt,
                           const TrainConfig& tcfg, const TokenDataset& data,
                           std::size_t step);

template <typename T>
class Trainer {
 public:
  Trainer(nn::ModelConfig mcfg, TrainConfig tcfg);

  TrainStepRecord step(const TokenDataset& data);

  std::size_t current_step() const noexcept { return step_; }
  nn::ModelParams<T>& params() noexcept { return params_; }
  const nn::ModelParams<T>& params() const noexcept { return params_; }
  const nn::ModelConfig& model_config() const noexcept { return mcfg_; }
  const TrainConfig& train_config() const noexcept { return tcfg_; }

  void save_checkpoint(const std::string& path) const;
  // Restores parameters, optimizer state and step counter.
  static Trainer load_checkpoint(const std::string& path);

 private:
  nn::ModelConfig mcfg_;
  TrainConfig tcfg_;
  nn::ModelParams<T> params_;
  Optimizer<T> opt_;
  std::size_t step_ = 0;
};

struct RunOptions {
  std::string out_dir;
  std::optional<std::string> resume_from;  // checkpoint path
};

struct RunResult {
  std::vector<TrainStepRecord> records;  // this invocation only
  std::vector<std::string> checkpoints;
};

// Writes out_dir/log.jsonl and out_dir/ckpt_NNNNNN.bin. A checkpoint named
// for step k holds the state before step k runs. On resume the log is cut
// back to the records before the checkpoint step and extended.
RunResult run_training(const nn::ModelConfig& mcfg, const TrainConfig& tcfg,
                       const TokenDataset& data, const RunOptions& opts);

std::string checkpoint_name(std::size_t step);

// Documents sampled from a Markov chain over `states` units (ids start
// after the specials). With order 1 the next unit depends on the current
// one; with order 2 on the last two. Every context has `fanout` successors
// with random weights; the chain itself is fixed by chain_seed.
std::vector<TokenSequence> markov_corpus(std::size_t docs, std::size_t doc_len,
                                         std::size_t states, std::size_t fanout,
                                         std::uint64_t chain_seed,
                                         std::uint64_t sample_seed,
                                         std::size_t order = 1);

}  // namespace toba::train
