#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "feedalign/backend.hpp"
#include "feedalign/corpus.hpp"
#include "feedalign/rng.hpp"

namespace feedalign {

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

enum class StrategyKind { zero_shot, fewshot_random, fewshot_similar };

inline const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::zero_shot: return "zeroshot";
    case StrategyKind::fewshot_random: return "fewshot_random";
    case StrategyKind::fewshot_similar: return "fewshot_similar";
  }
  throw Error("unknown strategy");
}

inline FeedbackSource strategy_source(StrategyKind k) {
  switch (k) {
    case StrategyKind::zero_shot: return FeedbackSource::zeroshot;
    case StrategyKind::fewshot_random: return FeedbackSource::fewshot_random;
    case StrategyKind::fewshot_similar: return FeedbackSource::fewshot_similar;
  }
  throw Error("unknown strategy");
}

struct GenStrategy {
  StrategyKind kind = StrategyKind::zero_shot;
  int k = 0;  // in-context example count; 0 for zero_shot, >= 1 otherwise

  void validate() const {
    if (kind == StrategyKind::zero_shot && k != 0)
      throw Error("zero_shot strategy must have k = 0");
    if (kind != StrategyKind::zero_shot && k < 1)
      throw Error("few-shot strategies need k >= 1");
  }
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

// Text to unit-normalized fixed-dimension vector. Implementations must be
// deterministic in their input.
class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Offline embedder: hashed character trigrams with L2 normalization. Crude,
// but deterministic and good enough to rank near-duplicate inputs first.
class HashedNgramEmbedder : public EmbeddingProvider {
public:
  explicit HashedNgramEmbedder(std::size_t dimension = 64) : dimension_(dimension) {
    if (dimension_ == 0) throw Error("embedding dimension must be positive");
  }

  std::size_t dimension() const override { return dimension_; }

  std::vector<double> embed(const std::string& text) const override {
    std::vector<double> v(dimension_, 0.0);
    const std::string padded = "^" + to_lower(text) + "$";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      const std::uint64_t h = fnv1a64(std::string_view(padded).substr(i, 3));
      v[h % dimension_] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      v[0] = 1.0;  // degenerate input; keep the unit-norm contract
      return v;
    }
    for (double& x : v) x /= norm;
    return v;
  }

private:
  std::size_t dimension_;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Example pool
// ---------------------------------------------------------------------------

// Gold items (train split only) available as in-context demonstrations,
// optionally with precomputed embeddings of "question ∥ correct ∥ incorrect".
struct ExamplePool {
  std::vector<FeedbackItem> items;
  std::vector<std::vector<double>> embeddings;  // empty or one per item

  std::size_t size() const { return items.size(); }
};

inline std::string similarity_text(const FeedbackInput& input) {
  return input.question + "\n" + input.correct_answer + "\n" +
         input.incorrect_answer;
}

inline ExamplePool make_example_pool(std::vector<FeedbackItem> items,
                                     const EmbeddingProvider* provider = nullptr) {
  for (const FeedbackItem& item : items)
    if (item.source != FeedbackSource::gold)
      throw Error("example pool must contain gold items only (got " +
                  item.item_id + ")");
  ExamplePool pool;
  pool.items = std::move(items);
  if (provider) {
    pool.embeddings.reserve(pool.items.size());
    for (const FeedbackItem& item : pool.items)
      pool.embeddings.push_back(provider->embed(similarity_text(item.input)));
  }
  return pool;
}

inline std::vector<FeedbackItem> select_random_examples(const ExamplePool& pool,
                                                        std::size_t k,
                                                        std::uint64_t seed) {
  if (k > pool.size())
    throw Error("select_random_examples: k exceeds pool size");
  Rng rng(derive_seed(seed, "augment.examples"));
  std::vector<FeedbackItem> out;
  out.reserve(k);
  for (std::size_t i : rng.sample_indices(pool.size(), k))
    out.push_back(pool.items[i]);
  return out;
}

// Top-k by cosine similarity, descending; ties broken by ascending pool
// index. When exclude_item_id names a pool item it is skipped.
inline std::vector<FeedbackItem> select_similar_examples(
    const ExamplePool& pool, const std::vector<double>& query, std::size_t k,
    const std::string& exclude_item_id = "") {
  if (pool.embeddings.size() != pool.items.size())
    throw Error("select_similar_examples: pool has no embeddings");
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!exclude_item_id.empty() && pool.items[i].item_id == exclude_item_id)
      continue;
    scored.emplace_back(dot(pool.embeddings[i], query), i);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (k < scored.size()) scored.resize(k);
  std::vector<FeedbackItem> out;
  out.reserve(scored.size());
  for (const auto& [sim, i] : scored) out.push_back(pool.items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Generation prompt
// ---------------------------------------------------------------------------

// Bump when the template text changes; recorded in run manifests so outputs
// remain comparable across experiments.
inline const char* kGenerationPromptVersion = "gen-prompt/v1";

inline const char* kGenerationSystemText =
    "You are a math teacher giving feedback to a student who answered a "
    "question incorrectly.";

// Generation prompt: question, correct answer and incorrect answer only.
// The worked solution never appears here, only in evaluation prompts.
inline PromptPair build_generation_prompt(const FeedbackItem& item,
                                          const std::vector<FeedbackItem>& examples) {
  std::string user;
  user +=
      "Write short and helpful feedback for the student's incorrect answer. "
      "Follow these rules:\n";
  user += "- Do not reveal the correct answer.\n";
  user += "- Correctly point out the error the student made.\n";
  user += "- Give a suggestion that guides the student towards the correct answer.\n";
  user += "- Be positive and encouraging.\n";
  user += "- Keep the feedback brief.\n";
  for (const FeedbackItem& example : examples) {
    if (example.item_id == item.item_id)
      throw Error("in-context examples must exclude the target item");
    user += "\n";
    user += "Question: " + example.input.question + "\n";
    user += "Correct Answer: " + example.input.correct_answer + "\n";
    user += "Incorrect Answer: " + example.input.incorrect_answer + "\n";
    user += "Feedback: " + example.feedback + "\n";
  }
  user += "\n";
  user += "Question: " + item.input.question + "\n";
  user += "Correct Answer: " + item.input.correct_answer + "\n";
  user += "Incorrect Answer: " + item.input.incorrect_answer + "\n";
  user += "Feedback:";
  return {kGenerationSystemText, user};
}

// ---------------------------------------------------------------------------
// Augmentation runs
// ---------------------------------------------------------------------------

struct AugmentConfig {
  std::string model_id = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_response_tokens = 200;
  int parallelism = 1;
  ResponseCache* cache = nullptr;
  RetryPolicy transport_retry = {};
  // Required for fewshot_similar; must be the provider the pool was
  // embedded with.
  const EmbeddingProvider* embedder = nullptr;
};

// Regenerates each item's feedback with the given strategy. Inputs are
// preserved verbatim; outputs carry the strategy's source tag. Items whose
// backend call fails for good are dropped with a logged incident.
inline std::vector<FeedbackItem> run_augmentation(const std::vector<FeedbackItem>& items,
                                                  ChatBackend& backend,
                                                  const GenStrategy& strategy,
                                                  const ExamplePool& pool,
                                                  std::uint64_t seed,
                                                  const AugmentConfig& config = {}) {
  strategy.validate();
  if (strategy.kind == StrategyKind::fewshot_similar) {
    if (pool.embeddings.size() != pool.items.size())
      throw Error("fewshot_similar needs an embedded example pool");
    if (!config.embedder)
      throw Error("fewshot_similar needs config.embedder");
  }

  std::vector<std::optional<FeedbackItem>> slots(items.size());

  auto process = [&](std::size_t i) {
    const FeedbackItem& item = items[i];
    std::vector<FeedbackItem> examples;
    if (strategy.kind == StrategyKind::fewshot_random) {
      ExamplePool filtered;
      for (const FeedbackItem& candidate : pool.items)
        if (candidate.item_id != item.item_id) filtered.items.push_back(candidate);
      examples = select_random_examples(filtered, strategy.k,
                                        derive_seed(seed, item.item_id));
    } else if (strategy.kind == StrategyKind::fewshot_similar) {
      const std::vector<double> query =
          config.embedder->embed(similarity_text(item.input));
      examples = select_similar_examples(pool, query,
                                         static_cast<std::size_t>(strategy.k),
                                         item.item_id);
    }

    const PromptPair prompt = build_generation_prompt(item, examples);
    ChatRequest request;
    request.system_text = prompt.system_text;
    request.user_text = prompt.user_text;
    request.model_id = config.model_id;
    request.temperature = config.temperature;
    request.max_response_tokens = config.max_response_tokens;
    try {
      const std::string response =
          llm_call(backend, request, config.cache, config.transport_retry);
      FeedbackItem out = item;
      out.source = strategy_source(strategy.kind);
      out.item_id = make_item_id(item.question_id, item.distractor_id, out.source);
      out.feedback = trim(response);
      slots[i] = std::move(out);
    } catch (const BackendError& e) {
      std::cerr << "[augment] dropping item " << item.item_id << ": " << e.what()
                << "\n";
    }
  };

  const int workers = std::max(1, std::min<int>(config.parallelism,
                                                static_cast<int>(items.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (;;) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= items.size()) return;
          process(i);
        }
      });
    }
    for (std::thread& t : threads) t.join();
  }

  std::vector<FeedbackItem> out;
  out.reserve(items.size());
  for (std::optional<FeedbackItem>& slot : slots)
    if (slot) out.push_back(std::move(*slot));
  return out;
}

// ---------------------------------------------------------------------------
// Template mock backend
// ---------------------------------------------------------------------------

// Deterministic generation stand-in for offline runs: looks the target item
// up by the prompt's trailing question/incorrect-answer block and returns a
// perturbed version of its gold feedback. The perturbation is chosen by a
// content hash of the prompt, which spreads oracle scores across the
// augmented set by construction.
class TemplateMockBackend : public ChatBackend {
public:
  explicit TemplateMockBackend(const Corpus& corpus) {
    for (const QuestionRecord& q : corpus.questions)
      for (const DistractorRecord& d : q.distractors)
        entries_[key(q.question_text, d.incorrect_answer)] = {d.gold_feedback,
                                                              d.truth};
  }

  std::string send(const ChatRequest& request) override {
    const std::string question = last_field(request.user_text, "Question: ");
    const std::string incorrect =
        last_field(request.user_text, "Incorrect Answer: ");
    const std::string correct = last_field(request.user_text, "Correct Answer: ");
    const auto it = entries_.find(key(question, incorrect));
    if (it == entries_.end())
      return "i think you made a small mistake. try it again step by step. "
             "keep going!";
    const Entry& entry = it->second;
    const std::uint64_t h = fnv1a64(request.user_text);
    switch (h % 7) {
      case 0:
      case 1: return entry.gold;  // keep the gold feedback
      case 2: return wrong_diagnosis(entry, h);
      case 3: return entry.gold + " the answer is " + correct + ".";
      case 4: return without(entry.gold, " keep going!");
      case 5: return without(entry.gold, " try it again step by step.");
      default: return "thanks for your answer.";
    }
  }

  std::string id() const override { return "template-mock"; }

private:
  struct Entry {
    std::string gold;
    std::optional<SyntheticTruth> truth;
  };

  static std::string key(const std::string& question, const std::string& incorrect) {
    return question + "\x1f" + incorrect;
  }

  static std::string last_field(const std::string& text, const std::string& label) {
    const std::size_t pos = text.rfind(label);
    if (pos == std::string::npos) return "";
    const std::size_t begin = pos + label.size();
    const std::size_t end = text.find('\n', begin);
    return text.substr(begin, end == std::string::npos ? std::string::npos
                                                       : end - begin);
  }

  static std::string without(std::string text, const std::string& piece) {
    const std::size_t pos = text.find(piece);
    if (pos != std::string::npos) text.erase(pos, piece.size());
    return text;
  }

  // Swap the diagnosis clause for a different error kind's clause.
  static std::string wrong_diagnosis(const Entry& entry, std::uint64_t h) {
    if (!entry.truth)
      return "you rushed the last step. try it again step by step. keep going!";
    std::vector<ErrorKind> others;
    for (ErrorKind kind : synth::kAllErrorKinds)
      if (kind != entry.truth->error_type) others.push_back(kind);
    const ErrorKind wrong = others[(h >> 8) % others.size()];
    return synth::gold_feedback(wrong);
  }

  std::unordered_map<std::string, Entry> entries_;
};

}  // namespace feedalign
