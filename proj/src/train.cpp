#include "toba/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "toba/checkpoint.hpp"
#include "toba/common.hpp"
#include "toba/config_io.hpp"
#include "toba/runlog.hpp"

namespace toba::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr))
    throw ConfigError("base_lr must be finite and >= 0");
  if (!(engram_lr_multiplier >= 1.0))
    throw ConfigError("engram_lr_multiplier must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (grad_accum_steps < 1) throw ConfigError("grad_accum_steps must be >= 1");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0))
    throw ConfigError("min_lr_ratio must lie in [0, 1]");
}

double lr_at(const TrainConfig& cfg, std::size_t step) {
  if (step < cfg.warmup_steps)
    return cfg.base_lr * static_cast<double>(step + 1) /
           static_cast<double>(cfg.warmup_steps);
  const std::size_t span =
      cfg.max_steps > cfg.warmup_steps ? cfg.max_steps - cfg.warmup_steps : 1;
  const double progress = std::min(
      1.0, static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.base_lr * (cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * cosine);
}

// ---------------------------------------------------------------------------
// Gradient norms and the optimizer

template <typename T>
double grad_norm(std::span<Param<T>* const> params, ParamGroup group) {
  double ss = 0.0;
  for (const Param<T>* p : params) {
    if (p->group != group) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      ss += g * g;
    }
  }
  return std::sqrt(ss);
}

template <typename T>
std::vector<Param<T>*> param_list(nn::ModelParams<T>& params) {
  std::vector<Param<T>*> out;
  params.visit([&](Param<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
double grad_norm(const nn::ModelParams<T>& params, ParamGroup group) {
  auto& mut = const_cast<nn::ModelParams<T>&>(params);
  const auto list = param_list(mut);
  return grad_norm<T>(list, group);
}

template <typename T>
void Optimizer<T>::step(std::span<Param<T>* const> params, double lr_backbone,
                        double lr_engram) {
  ++t_;
  if (cfg_.optimizer == OptimizerKind::sgd) {
    for (Param<T>* p : params) {
      const double lr = p->group == ParamGroup::engram ? lr_engram : lr_backbone;
      for (std::size_t i = 0; i < p->value.size(); ++i)
        p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) -
                                     lr * static_cast<double>(p->grad[i]));
    }
    return;
  }
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const Param<T>* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>& p = *params[k];
    const double lr = p.group == ParamGroup::engram ? lr_engram : lr_backbone;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double w = static_cast<double>(p.value[i]);
      const double upd = (mi / c1) / (std::sqrt(vi / c2) + cfg_.adam_eps) +
                         cfg_.weight_decay * w;
      p.value[i] = static_cast<T>(w - lr * upd);
    }
  }
}

template <typename T>
void Optimizer<T>::restore(std::uint64_t t, std::vector<Matrix<T>> m,
                           std::vector<Matrix<T>> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---------------------------------------------------------------------------
// Data

TokenDataset::TokenDataset(const std::vector<TokenSequence>& docs,
                           std::size_t seq)
    : seq_(seq) {
  if (seq < 1) throw ConfigError("sequence length must be >= 1");
  for (const auto& d : docs) {
    for (TokenId id : d) {
      if (id < 0) throw OutOfRange("negative token id in dataset");
      max_id_ = std::max(max_id_, id);
      stream_.push_back(id);
    }
    stream_.push_back(tok::kEosId);
  }
  if (!stream_.empty()) max_id_ = std::max(max_id_, tok::kEosId);
  windows_ = stream_.size() > seq ? (stream_.size() - 1) / seq : 0;
}

std::vector<TokenSequence> TokenDataset::read_documents(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<TokenSequence> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    TokenSequence doc;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      TokenId id = 0;
      auto [next, ec] = std::from_chars(p, end, id);
      if (ec != std::errc{} || id < 0 ||
          (next < end && *next != ' ' && *next != '\t' && *next != '\r'))
        throw ParseError(path + ": expected a non-negative token id", line_no);
      doc.push_back(id);
      p = next;
    }
    if (!doc.empty()) docs.push_back(std::move(doc));
  }
  return docs;
}

void TokenDataset::write_documents(const std::string& path,
                                   const std::vector<TokenSequence>& docs) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  for (const auto& d : docs) {
    for (std::size_t i = 0; i < d.size(); ++i) os << (i ? " " : "") << d[i];
    os << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

std::size_t TokenDataset::window_for_sample(std::uint64_t seed,
                                            std::uint64_t k) const {
  if (windows_ == 0)
    throw InsufficientData("dataset has fewer than seq + 1 tokens");
  const std::uint64_t epoch = k / windows_;
  if (epoch != cached_epoch_ || seed != cached_seed_) {
    perm_.resize(windows_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    Rng rng(seed, 2 + epoch);
    for (std::size_t i = windows_; i > 1; --i)
      std::swap(perm_[i - 1], perm_[rng.below(i)]);
    cached_epoch_ = epoch;
    cached_seed_ = seed;
  }
  return perm_[k % windows_];
}

void TokenDataset::fill(std::uint64_t seed, std::uint64_t first,
                        std::size_t count, nn::TokenBatch& inputs,
                        std::vector<TokenId>& targets) const {
  inputs.batch = count;
  inputs.seq = seq_;
  inputs.ids.resize(count * seq_);
  targets.resize(count * seq_);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t w = window_for_sample(seed, first + b);
    const TokenId* src = stream_.data() + w * seq_;
    std::copy(src, src + seq_, inputs.ids.begin() + static_cast<std::ptrdiff_t>(b * seq_));
    std::copy(src + 1, src + seq_ + 1,
              targets.begin() + static_cast<std::ptrdiff_t>(b * seq_));
  }
}

// ---------------------------------------------------------------------------
// Training step

template <typename T>
TrainStepRecord train_step(nn::ModelParams<T>& params,
                           const nn::ModelConfig& mcfg, Optimizer<T>& opt,
                           const TrainConfig& tcfg, const TokenDataset& data,
                           std::size_t step) {
  const auto last_good = static_cast<std::int64_t>(step) - 1;
  params.zero_grad();
  const std::size_t accum = tcfg.grad_accum_steps;
  nn::TokenBatch inputs;
  std::vector<TokenId> targets;
  double loss = 0.0;
  for (std::size_t a = 0; a < accum; ++a) {
    const std::uint64_t first =
        (static_cast<std::uint64_t>(step) * accum + a) * tcfg.batch_size;
    data.fill(tcfg.seed, first, tcfg.batch_size, inputs, targets);
    nn::ForwardCache<T> cache;
    Matrix<T> dlogits;
    const Matrix<T> logits = nn::model_forward(inputs, params, mcfg, &cache);
    const double l = static_cast<double>(nn::nll_loss(logits, targets, &dlogits));
    if (!std::isfinite(l))
      throw NumericalDivergence("non-finite loss at step " + std::to_string(step),
                                last_good);
    loss += l / static_cast<double>(accum);
    if (accum > 1) {
      const T s = T{1} / static_cast<T>(accum);
      for (std::size_t i = 0; i < dlogits.size(); ++i) dlogits[i] *= s;
    }
    nn::model_backward(dlogits, cache, params, mcfg);
  }

  const auto list = param_list(params);
  TrainStepRecord r;
  r.step = step;
  r.loss = loss;
  r.lr_backbone = lr_at(tcfg, step);
  r.lr_engram = engram_lr_at(tcfg, step);
  r.grad_norm_engram = grad_norm<T>(list, ParamGroup::engram);
  r.grad_norm_backbone = grad_norm<T>(list, ParamGroup::backbone);
  if (!std::isfinite(r.grad_norm_engram) || !std::isfinite(r.grad_norm_backbone))
    throw NumericalDivergence(
        "non-finite gradient at step " + std::to_string(step), last_good);

  if (tcfg.clip_norm > 0.0) {
    const double total = std::hypot(r.grad_norm_engram, r.grad_norm_backbone);
    if (total > tcfg.clip_norm) {
      const T s = static_cast<T>(tcfg.clip_norm / total);
      for (Param<T>* p : list)
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
    }
  }
  opt.step(list, r.lr_backbone, r.lr_engram);
  return r;
}

// ---------------------------------------------------------------------------
// Trainer and checkpoints

template <typename T>
Trainer<T>::Trainer(nn::ModelConfig mcfg, TrainConfig tcfg)
    : mcfg_(std::move(mcfg)),
      tcfg_(std::move(tcfg)),
      params_(mcfg_),
      opt_(tcfg_) {
  tcfg_.validate();
  params_.init(mcfg_, tcfg_.seed);
}

template <typename T>
TrainStepRecord Trainer<T>::step(const TokenDataset& data) {
  auto r = train_step(params_, mcfg_, opt_, tcfg_, data, step_);
  ++step_;
  return r;
}

namespace {

template <typename T>
constexpr const char* dtype_name() {
  return std::is_same_v<T, float> ? "float32" : "float64";
}

}  // namespace

template <typename T>
void Trainer<T>::save_checkpoint(const std::string& path) const {
  ckpt::Container c;
  c.meta = json{{"format", "toba-checkpoint"},
                {"dtype", dtype_name<T>()},
                {"step", step_},
                {"optimizer_updates", opt_.updates()},
                {"model_config", to_json(mcfg_)},
                {"train_config", to_json(tcfg_)}};
  std::vector<std::string> names;
  params_.visit([&](const Param<T>& p) {
    c.sections.push_back(ckpt::make_section(p.name, p.value));
    names.push_back(p.name);
  });
  const auto& m = opt_.first_moment();
  const auto& v = opt_.second_moment();
  for (std::size_t k = 0; k < m.size() && k < names.size(); ++k) {
    c.sections.push_back(ckpt::make_section("adam.m/" + names[k], m[k]));
    c.sections.push_back(ckpt::make_section("adam.v/" + names[k], v[k]));
  }
  ckpt::write_file(path, c);
}

template <typename T>
Trainer<T> Trainer<T>::load_checkpoint(const std::string& path) {
  const auto c = ckpt::read_file(path);
  if (c.meta.value("dtype", "") != dtype_name<T>())
    throw ConfigError(path + ": checkpoint precision differs from the requested one");
  Trainer<T> tr(model_config_from_json(c.meta.at("model_config")),
                train_config_from_json(c.meta.at("train_config")));
  tr.step_ = c.meta.at("step").get<std::size_t>();
  auto list = param_list(tr.params_);
  std::vector<Matrix<T>> m, v;
  for (Param<T>* p : list) {
    const auto* s = c.find(p->name);
    if (!s) throw IoError(path + ": missing section " + p->name);
    ckpt::read_section(*s, p->value);
    const auto* sm = c.find("adam.m/" + p->name);
    const auto* sv = c.find("adam.v/" + p->name);
    if (sm && sv) {
      m.emplace_back(p->value.rows(), p->value.cols());
      v.emplace_back(p->value.rows(), p->value.cols());
      ckpt::read_section(*sm, m.back());
      ckpt::read_section(*sv, v.back());
    }
  }
  if (!m.empty() && m.size() != list.size())
    throw IoError(path + ": optimizer state is incomplete");
  tr.opt_.restore(c.meta.at("optimizer_updates").get<std::uint64_t>(),
                  std::move(m), std::move(v));
  tr.params_.zero_grad();
  return tr;
}

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06zu.bin", step);
  return buf;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

template <typename T>
RunResult run_impl(const nn::ModelConfig& mcfg, const TrainConfig& tcfg,
                   const TokenDataset& data, const RunOptions& opts) {
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cannot create " + opts.out_dir + ": " + ec.message());
  const fs::path out(opts.out_dir);
  const std::string log_path = (out / "log.jsonl").string();
  const std::string header = json{{"header", make_log_header(mcfg, tcfg)}}.dump();

  RunResult result;
  auto save = [&](const Trainer<T>& tr) {
    const std::string p = (out / checkpoint_name(tr.current_step())).string();
    try {
      tr.save_checkpoint(p);
    } catch (const IoError& e) {
      throw IoError("checkpoint at step " + std::to_string(tr.current_step()) +
                    ": " + e.what());
    }
    result.checkpoints.push_back(p);
  };

  std::optional<Trainer<T>> tr;
  std::vector<std::string> kept;
  if (opts.resume_from) {
    tr.emplace(Trainer<T>::load_checkpoint(*opts.resume_from));
    if (to_json(tr->model_config()) != to_json(mcfg))
      throw ConfigError("resume: model config differs from the checkpoint");
    if (to_json(tr->train_config()) != to_json(tcfg))
      throw ConfigError("resume: train config differs from the checkpoint");
    std::ifstream old(log_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(old, line)) {
      ++line_no;
      if (line_no == 1) continue;
      if (line.empty()) continue;
      if (parse_record(line, line_no).step >= tr->current_step()) break;
      kept.push_back(line);
    }
  } else {
    tr.emplace(mcfg, tcfg);
  }

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path);
  log << header << "\n";
  for (const auto& l : kept) log << l << "\n";
  log.flush();
  if (!log) throw IoError("write failed: " + log_path);

  if (!opts.resume_from) save(*tr);
  const auto t0 = std::chrono::steady_clock::now();
  while (tr->current_step() < tcfg.max_steps) {
    auto rec = tr->step(data);
    if (tcfg.log_wallclock)
      rec.wallclock_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    if (rec.step % tcfg.log_every == 0) {
      log << format_record(rec) << "\n";
      log.flush();
      if (!log)
        throw IoError("writing log at step " + std::to_string(rec.step) + ": " +
                      log_path);
      result.records.push_back(rec);
    }
    const std::size_t s = tr->current_step();
    if ((tcfg.checkpoint_every && s % tcfg.checkpoint_every == 0) ||
        s == tcfg.max_steps)
      save(*tr);
  }
  return result;
}

}  // namespace

RunResult run_training(const nn::ModelConfig& mcfg, const TrainConfig& tcfg,
                       const TokenDataset& data, const RunOptions& opts) {
  mcfg.validate();
  tcfg.validate();
  if (data.max_id() >= static_cast<TokenId>(mcfg.vocab_size))
    throw ConfigError("dataset contains token id " + std::to_string(data.max_id()) +
                      " but vocab_size is " + std::to_string(mcfg.vocab_size));
  if (data.seq() > mcfg.context_len)
    throw ConfigError("dataset sequence length exceeds context_len");
  if (tcfg.precision.value_or(mcfg.precision) == nn::Precision::float32)
    return run_impl<float>(mcfg, tcfg, data, opts);
  return run_impl<double>(mcfg, tcfg, data, opts);
}

std::vector<TokenSequence> markov_corpus(std::size_t docs, std::size_t doc_len,
                                         std::size_t states, std::size_t fanout,
                                         std::uint64_t chain_seed,
                                         std::uint64_t sample_seed,
                                         std::size_t order) {
  if (states < 1 || fanout < 1 || fanout > states)
    throw ConfigError("markov_corpus: need 1 <= fanout <= states");
  if (order != 1 && order != 2) throw ConfigError("markov_corpus: order must be 1 or 2");
  const std::size_t contexts = order == 1 ? states : states * states;
  Rng chain(chain_seed, 7);
  std::vector<std::vector<std::size_t>> next(contexts);
  std::vector<std::vector<double>> cdf(contexts);
  for (std::size_t s = 0; s < contexts; ++s) {
    std::set<std::size_t> picked;
    while (picked.size() < fanout) picked.insert(chain.below(states));
    next[s].assign(picked.begin(), picked.end());
    double total = 0.0;
    for (std::size_t k = 0; k < fanout; ++k) {
      total += 0.1 + chain.uniform();
      cdf[s].push_back(total);
    }
    for (auto& c : cdf[s]) c /= total;
  }
  Rng rng(sample_seed, 8);
  std::vector<TokenSequence> out(docs);
  for (auto& d : out) {
    std::size_t prev = rng.below(states);
    std::size_t s = rng.below(states);
    for (std::size_t i = 0; i < doc_len; ++i) {
      d.push_back(static_cast<TokenId>(tok::kNumSpecials + s));
      const std::size_t ctx = order == 1 ? s : prev * states + s;
      const double u = rng.uniform();
      std::size_t k = 0;
      while (k + 1 < fanout && u >= cdf[ctx][k]) ++k;
      prev = s;
      s = next[ctx][k];
    }
  }
  return out;
}

#define TOBA_INSTANTIATE_TRAIN(T)                                          \
  template double grad_norm<T>(std::span<Param<T>* const>, ParamGroup);    \
  template double grad_norm<T>(const nn::ModelParams<T>&, ParamGroup);     \
  template std::vector<Param<T>*> param_list<T>(nn::ModelParams<T>&);      \
  template class Optimizer<T>;                                             \
  template TrainStepRecord train_step<T>(nn::ModelParams<T>&,              \
                                         const nn::ModelConfig&,           \
                                         Optimizer<T>&, const TrainConfig&, \
                                         const TokenDataset&, std::size_t); \
  template class Trainer<T>;

TOBA_INSTANTIATE_TRAIN(float)
TOBA_INSTANTIATE_TRAIN(double)

}  // namespace toba::train
