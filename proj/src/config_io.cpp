#include "toba/config_io.hpp"

#include <fstream>
#include <set>

#include "toba/common.hpp"

namespace toba {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  std::set<std::string> ok(known.begin(), known.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key))
      throw ConfigError(std::string(what) + ": unknown key \"" + key + "\"");
}

template <typename V>
void get_if(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

}  // namespace

std::string precision_name(nn::Precision p) {
  return p == nn::Precision::float32 ? "float32" : "float64";
}

nn::Precision parse_precision(const std::string& s) {
  if (s == "float32") return nn::Precision::float32;
  if (s == "float64") return nn::Precision::float64;
  throw ConfigError("precision must be float32 or float64, got \"" + s + "\"");
}

json to_json(const engram::EngramConfig& c) {
  return json{{"table_size", c.table_size},
              {"dim", c.dim},
              {"heads", c.heads},
              {"insert_after_block", c.insert_after_block},
              {"rms_eps", c.rms_eps},
              {"bos_id", c.bos_id}};
}

json to_json(const nn::ModelConfig& c) {
  json j{{"n_blocks", c.n_blocks},
         {"d_model", c.d_model},
         {"n_heads", c.n_heads},
         {"context_len", c.context_len},
         {"vocab_size", c.vocab_size},
         {"mlp_ratio", c.mlp_ratio},
         {"tie_embeddings", c.tie_embeddings},
         {"zero_init_head", c.zero_init_head},
         {"init_std", c.init_std},
         {"norm_eps", c.norm_eps},
         {"engram", c.engram ? to_json(*c.engram) : json(nullptr)},
         {"precision", precision_name(c.precision)}};
  return j;
}

json to_json(const train::TrainConfig& c) {
  return json{
      {"base_lr", c.base_lr},
      {"engram_lr_multiplier", c.engram_lr_multiplier},
      {"batch_size", c.batch_size},
      {"grad_accum_steps", c.grad_accum_steps},
      {"max_steps", c.max_steps},
      {"seed", c.seed},
      {"warmup_steps", c.warmup_steps},
      {"clip_norm", c.clip_norm},
      {"log_every", c.log_every},
      {"checkpoint_every", c.checkpoint_every},
      {"precision", c.precision ? json(precision_name(*c.precision)) : json(nullptr)},
      {"optimizer", c.optimizer == train::OptimizerKind::adamw ? "adamw" : "sgd"},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"weight_decay", c.weight_decay},
      {"min_lr_ratio", c.min_lr_ratio},
      {"log_wallclock", c.log_wallclock}};
}

nn::ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j,
                 {"preset", "n_blocks", "d_model", "n_heads", "context_len",
                  "vocab_size", "mlp_ratio", "tie_embeddings", "zero_init_head",
                  "init_std", "norm_eps", "engram", "precision"},
                 "model config");
  nn::ModelConfig c;
  if (j.contains("preset")) {
    const auto p = j.at("preset").get<std::string>();
    if (p == "desk")
      c = nn::ModelConfig::desk();
    else if (p == "full-1p2b")
      c = nn::ModelConfig::full_1p2b();
    else
      throw ConfigError("unknown preset \"" + p + "\"");
  }
  get_if(j, "n_blocks", c.n_blocks);
  get_if(j, "d_model", c.d_model);
  get_if(j, "n_heads", c.n_heads);
  get_if(j, "context_len", c.context_len);
  get_if(j, "vocab_size", c.vocab_size);
  get_if(j, "mlp_ratio", c.mlp_ratio);
  get_if(j, "tie_embeddings", c.tie_embeddings);
  get_if(j, "zero_init_head", c.zero_init_head);
  get_if(j, "init_std", c.init_std);
  get_if(j, "norm_eps", c.norm_eps);
  if (j.contains("precision"))
    c.precision = parse_precision(j.at("precision").get<std::string>());
  if (j.contains("engram")) {
    const auto& e = j.at("engram");
    if (e.is_null()) {
      c.engram.reset();
    } else {
      reject_unknown(e,
                     {"table_size", "dim", "heads", "insert_after_block",
                      "rms_eps", "bos_id"},
                     "engram config");
      engram::EngramConfig ec = c.engram.value_or(engram::EngramConfig{});
      get_if(e, "table_size", ec.table_size);
      get_if(e, "dim", ec.dim);
      get_if(e, "heads", ec.heads);
      get_if(e, "insert_after_block", ec.insert_after_block);
      get_if(e, "rms_eps", ec.rms_eps);
      get_if(e, "bos_id", ec.bos_id);
      c.engram = ec;
    }
  }
  c.validate();
  return c;
}

train::TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                 {"base_lr", "engram_lr_multiplier", "batch_size",
                  "grad_accum_steps", "max_steps", "seed", "warmup_steps",
                  "clip_norm", "log_every", "checkpoint_every", "precision",
                  "optimizer", "beta1", "beta2", "adam_eps", "weight_decay",
                  "min_lr_ratio", "log_wallclock"},
                 "train config");
  train::TrainConfig c;
  get_if(j, "base_lr", c.base_lr);
  get_if(j, "engram_lr_multiplier", c.engram_lr_multiplier);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "grad_accum_steps", c.grad_accum_steps);
  get_if(j, "max_steps", c.max_steps);
  get_if(j, "seed", c.seed);
  get_if(j, "warmup_steps", c.warmup_steps);
  get_if(j, "clip_norm", c.clip_norm);
  get_if(j, "log_every", c.log_every);
  get_if(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("precision") && !j.at("precision").is_null())
    c.precision = parse_precision(j.at("precision").get<std::string>());
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o == "adamw")
      c.optimizer = train::OptimizerKind::adamw;
    else if (o == "sgd")
      c.optimizer = train::OptimizerKind::sgd;
    else
      throw ConfigError("optimizer must be adamw or sgd");
  }
  get_if(j, "beta1", c.beta1);
  get_if(j, "beta2", c.beta2);
  get_if(j, "adam_eps", c.adam_eps);
  get_if(j, "weight_decay", c.weight_decay);
  get_if(j, "min_lr_ratio", c.min_lr_ratio);
  get_if(j, "log_wallclock", c.log_wallclock);
  c.validate();
  return c;
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace toba
