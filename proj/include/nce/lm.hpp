#pragma once

// Desk-scale n-gram language model with a log-bilinear scoring function:
// tokenization, vocabulary, history indexing and a training driver.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nce/error.hpp"
#include "nce/evaluation.hpp"
#include "nce/model.hpp"
#include "nce/objectives.hpp"
#include "nce/optimize.hpp"
#include "nce/sampling.hpp"

namespace nce {

// Whitespace split, ASCII lowercasing.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(tok));
  }
  return out;
}

inline constexpr const char* kUnknownToken = "<unk>";

struct Vocabulary {
  std::vector<std::string> words;  // id 0 is <unk>
  std::unordered_map<std::string, int> index;
  std::vector<long long> counts;   // training counts

  int size() const { return static_cast<int>(words.size()); }
  int id(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? 0 : it->second;
  }

  static Vocabulary build(const std::vector<std::string>& train) {
    if (train.empty()) throw DomainError("vocabulary: empty training split");
    std::map<std::string, long long> freq;  // sorted for a deterministic id order
    for (const auto& w : train) ++freq[w];
    Vocabulary v;
    v.words.push_back(kUnknownToken);
    v.counts.push_back(0);
    for (const auto& [w, c] : freq) {
      if (w == kUnknownToken) {
        v.counts[0] += c;
        continue;
      }
      v.index[w] = static_cast<int>(v.words.size());
      v.words.push_back(w);
      v.counts.push_back(c);
    }
    v.index[kUnknownToken] = 0;
    if (v.size() < 2) throw DomainError("vocabulary: need at least one distinct token");
    return v;
  }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }
};

// Distinct histories (the inputs x) over one or more token streams.
class HistoryIndex {
 public:
  explicit HistoryIndex(int context_len) : len_(context_len) {
    if (len_ < 1) throw ConfigError("history length must be >= 1");
  }

  // Returns (history id, target) for every position with a full history.
  void add_stream(const std::vector<int>& ids, std::vector<Input>& xs, std::vector<Label>& ys) {
    xs.clear();
    ys.clear();
    for (size_t t = static_cast<size_t>(len_); t < ids.size(); ++t) {
      std::vector<int> h(ids.begin() + static_cast<long>(t) - len_, ids.begin() + static_cast<long>(t));
      auto [it, inserted] = map_.try_emplace(h, static_cast<Input>(map_.size()));
      if (inserted) flat_.insert(flat_.end(), h.begin(), h.end());
      xs.push_back(it->second);
      ys.push_back(ids[t]);
    }
  }

  int size() const { return static_cast<int>(map_.size()); }
  int context_len() const { return len_; }
  const std::vector<int>& flat() const { return flat_; }

 private:
  int len_;
  std::map<std::vector<int>, Input> map_;
  std::vector<int> flat_;
};

struct LmConfig {
  int dim = 16;
  int order = 2;  // n-gram order; history length is order - 1
  ObjectiveKind objective = ObjectiveKind::kMle;
  int K = 100;
  std::string noise = "unigram";  // uniform | unigram | unigram-pow:<p>
  bool context_bias = false;
  std::optional<RegularizerConfig> regularizer;
  SgdConfig sgd;
  double init_sigma = 0.1;
  double valid_fraction = 0.1;
  uint64_t seed = 0;
};

struct LmEpoch {
  int epoch = 0;
  double train_objective = 0.0;
  double train_ppl = 0.0;
  double valid_ppl = 0.0;
};

struct LmResult {
  int vocab = 0;
  int histories = 0;
  size_t train_tokens = 0;
  size_t valid_tokens = 0;
  std::vector<LmEpoch> epochs;
  double var_log_z = 0.0;   // over validation positions
  double mean_log_z = 0.0;
  double reg_estimate = 0.0;  // alpha-free sampled estimate of E_X[(log Z)^2] on the training data
  Vector params;
};

inline NoiseDistribution make_noise(const std::string& spec, std::span<const long long> counts) {
  if (spec == "uniform") return NoiseDistribution::uniform(static_cast<int>(counts.size()));
  if (spec == "unigram") return unigram_power(counts, 1.0);
  if (spec.rfind("unigram-pow:", 0) == 0) {
    double p = 0.0;
    try {
      p = std::stod(spec.substr(12));
    } catch (const std::exception&) {
      throw ConfigError("--noise unigram-pow:<p> needs a number");
    }
    if (!(p >= 0.0)) throw ConfigError("--noise unigram-pow:<p> needs p >= 0");
    return unigram_power(counts, p);
  }
  throw ConfigError("--noise must be uniform, unigram or unigram-pow:<p>, got '" + spec + "'");
}

// Mean and variance of log Z(x) over a list of history ids (with multiplicity).
inline std::pair<double, double> log_partition_stats(const ScoringFunction& sf, const Vector& theta,
                                                     std::span<const Input> xs) {
  if (xs.empty()) throw DomainError("log-partition statistics: empty context sample");
  std::unordered_map<Input, double> cache;
  std::vector<double> vals;
  vals.reserve(xs.size());
  for (Input x : xs) {
    auto it = cache.find(x);
    if (it == cache.end()) it = cache.emplace(x, log_partition(sf, theta, x)).first;
    vals.push_back(it->second);
  }
  const double mean = pairwise_sum(vals) / static_cast<double>(vals.size());
  for (double& v : vals) v = (v - mean) * (v - mean);
  return {mean, pairwise_sum(vals) / static_cast<double>(vals.size())};
}

// Trains on the first (1 - valid_fraction) of the tokens and evaluates on the rest.
inline LmResult train_language_model(const std::string& text, const LmConfig& cfg) {
  if (cfg.order < 2) throw ConfigError("order: must be >= 2");
  if (cfg.dim < 1) throw ConfigError("dim: must be >= 1");
  if (!(cfg.valid_fraction > 0.0 && cfg.valid_fraction < 1.0)) throw ConfigError("valid fraction must be in (0, 1)");
  const auto tokens = tokenize(text);
  const int len = cfg.order - 1;
  const size_t n_valid = static_cast<size_t>(std::floor(cfg.valid_fraction * static_cast<double>(tokens.size())));
  if (tokens.size() < n_valid + static_cast<size_t>(len) + 1 || n_valid <= static_cast<size_t>(len))
    throw DomainError("corpus too short for the requested split and order");
  const std::vector<std::string> train_tok(tokens.begin(), tokens.end() - static_cast<long>(n_valid));
  const std::vector<std::string> valid_tok(tokens.end() - static_cast<long>(n_valid), tokens.end());
  const Vocabulary vocab = Vocabulary::build(train_tok);
  const auto train_ids = vocab.encode(train_tok);
  const auto valid_ids = vocab.encode(valid_tok);
  if (std::all_of(valid_ids.begin(), valid_ids.end(), [](int i) { return i == 0; }))
    throw DomainError("validation split contains only out-of-vocabulary tokens");

  HistoryIndex hist(len);
  std::vector<Input> train_x, valid_x;
  std::vector<Label> train_y, valid_y;
  hist.add_stream(train_ids, train_x, train_y);
  hist.add_stream(valid_ids, valid_x, valid_y);

  ScoringFunction sf = ScoringFunction::log_bilinear(vocab.size(), cfg.dim, len, hist.flat());
  if (cfg.context_bias) sf = sf.with_context_bias();
  const NoiseDistribution noise = make_noise(cfg.noise, vocab.counts);

  const bool needs_negatives = cfg.objective == ObjectiveKind::kRanking || cfg.objective == ObjectiveKind::kBinary;
  Dataset data;
  data.x = train_x;
  data.y = train_y;
  data.K = needs_negatives ? cfg.K : 0;
  if (needs_negatives) {
    const SamplingConfig sc{cfg.K, cfg.seed, 0x6c6dULL};
    sc.validate();
    data.negatives = sample_negatives(sc, noise, data.size());
    data.provenance = {sc.seed, sc.stream, sc.K, noise.hash()};
  } else {
    data.provenance = {cfg.seed, 0x6c6dULL, 0, noise.hash()};
  }

  const bool binary = cfg.objective == ObjectiveKind::kBinary;
  Vector params = Vector::Zero(sf.num_params() + (binary ? 1 : 0));
  {
    Stream rng(cfg.seed, 0x696e6974ULL);
    const auto& lb = std::get<LogBilinear>(sf.inner());
    for (int i = 0; i < lb.b_offset(); ++i) params(i) = cfg.init_sigma * rng.normal();
  }

  LmResult res;
  res.vocab = vocab.size();
  res.histories = hist.size();
  res.train_tokens = train_x.size();
  res.valid_tokens = valid_x.size();
  auto theta_of = [&](const Vector& p) { return binary ? Vector(p.head(sf.num_params())) : p; };
  const auto stats = fit_sgd(sf, params, data, noise, cfg.objective, cfg.regularizer, cfg.sgd,
                             [&](int e, const Vector& p) {
                               const Vector th = theta_of(p);
                               LmEpoch ep;
                               ep.epoch = e;
                               ep.train_ppl = perplexity(sf, th, train_x, train_y);
                               ep.valid_ppl = perplexity(sf, th, valid_x, valid_y);
                               res.epochs.push_back(ep);
                             });
  for (size_t i = 0; i < stats.size() && i < res.epochs.size(); ++i) res.epochs[i].train_objective = stats[i].train_objective;
  const Vector theta = theta_of(params);
  std::tie(res.mean_log_z, res.var_log_z) = log_partition_stats(sf, theta, valid_x);
  {
    RegularizerConfig probe = cfg.regularizer.value_or(RegularizerConfig{});
    probe.alpha = 1.0;
    probe.m = std::max(probe.m, 1);
    res.reg_estimate = regularizer(sf, theta, data, noise, probe, 0, {}, false).value;
  }
  res.params = std::move(params);
  return res;
}

}  // namespace nce
