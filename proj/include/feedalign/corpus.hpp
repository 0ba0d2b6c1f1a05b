#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "feedalign/jsonl.hpp"
#include "feedalign/rng.hpp"
#include "feedalign/text.hpp"

namespace feedalign {

// ---------------------------------------------------------------------------
// Synthetic ground truth
// ---------------------------------------------------------------------------

// The rule that produced a synthetic distractor. `added`, `subtracted` and
// `multiplied` mean the student applied that operation instead of the
// intended one; `off_by_one` means the result is one away from the correct
// answer.
enum class ErrorKind { added, subtracted, multiplied, off_by_one };

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::added: return "added";
    case ErrorKind::subtracted: return "subtracted";
    case ErrorKind::multiplied: return "multiplied";
    case ErrorKind::off_by_one: return "off_by_one";
  }
  throw Error("unknown error kind");
}

inline ErrorKind error_kind_from_name(const std::string& name) {
  if (name == "added") return ErrorKind::added;
  if (name == "subtracted") return ErrorKind::subtracted;
  if (name == "multiplied") return ErrorKind::multiplied;
  if (name == "off_by_one") return ErrorKind::off_by_one;
  throw Error("unknown error kind: " + name);
}

struct SyntheticTruth {
  ErrorKind error_type = ErrorKind::added;
  std::string correct_answer_token;

  bool operator==(const SyntheticTruth&) const = default;
};

// Marker vocabulary shared by the synthetic feedback templates and the
// oracle judge. The oracle matches these as whole-token phrases.
namespace synth {

inline const char* kSuggestionMarker = "try";
inline const char* kEncouragementMarker = "keep going";

inline const char* error_marker(ErrorKind k) {
  switch (k) {
    case ErrorKind::added: return "added";
    case ErrorKind::subtracted: return "subtracted";
    case ErrorKind::multiplied: return "multiplied";
    case ErrorKind::off_by_one: return "off by one";
  }
  throw Error("unknown error kind");
}

inline constexpr std::array<ErrorKind, 4> kAllErrorKinds = {
    ErrorKind::added, ErrorKind::subtracted, ErrorKind::multiplied,
    ErrorKind::off_by_one};

// The clause naming the student's error, embedded in gold feedback.
inline std::string diagnosis_clause(ErrorKind k) {
  switch (k) {
    case ErrorKind::added: return "you added the numbers";
    case ErrorKind::subtracted: return "you subtracted the numbers";
    case ErrorKind::multiplied: return "you multiplied the numbers";
    case ErrorKind::off_by_one: return "your answer is off by one";
  }
  throw Error("unknown error kind");
}

inline std::string gold_feedback(ErrorKind k) {
  return diagnosis_clause(k) + ". try it again step by step. keep going!";
}

}  // namespace synth

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

struct DistractorRecord {
  std::string distractor_id;
  std::string incorrect_answer;  // the student's wrong answer d
  std::string gold_feedback;     // the teacher-written feedback f
  std::optional<SyntheticTruth> truth;
};

struct QuestionRecord {
  std::string question_id;
  std::string question_text;   // q
  std::string correct_answer;  // c
  std::string explanation;     // e, the worked solution
  bool has_image = false;
  std::vector<DistractorRecord> distractors;
};

enum class FeedbackSource { gold, fewshot_random, fewshot_similar, zeroshot };

inline const char* source_name(FeedbackSource s) {
  switch (s) {
    case FeedbackSource::gold: return "gold";
    case FeedbackSource::fewshot_random: return "fewshot_random";
    case FeedbackSource::fewshot_similar: return "fewshot_similar";
    case FeedbackSource::zeroshot: return "zeroshot";
  }
  throw Error("unknown feedback source");
}

inline FeedbackSource source_from_name(const std::string& name) {
  if (name == "gold") return FeedbackSource::gold;
  if (name == "fewshot_random") return FeedbackSource::fewshot_random;
  if (name == "fewshot_similar") return FeedbackSource::fewshot_similar;
  if (name == "zeroshot") return FeedbackSource::zeroshot;
  throw Error("unknown feedback source: " + name);
}

// The conditioning input x for one feedback: everything known about the
// question and the specific incorrect answer.
struct FeedbackInput {
  std::string question;
  std::string correct_answer;
  std::string explanation;
  std::string incorrect_answer;

  bool operator==(const FeedbackInput&) const = default;
};

// One (input, feedback) example. Gold items come from flatten(); augmented
// items carry the generating strategy as their source.
struct FeedbackItem {
  std::string item_id;
  std::string question_id;
  std::string distractor_id;
  FeedbackInput input;
  std::string feedback;
  FeedbackSource source = FeedbackSource::gold;
  std::optional<SyntheticTruth> ground_truth;
};

struct Corpus {
  std::vector<QuestionRecord> questions;
  std::string origin;  // provenance note: file path or generator tag

  std::size_t size() const { return questions.size(); }
};

struct SplitCorpus {
  Corpus train;
  Corpus validation;
  Corpus test;
};

// ---------------------------------------------------------------------------
// Question / item JSONL
// ---------------------------------------------------------------------------

inline json question_to_json(const QuestionRecord& q) {
  json distractors = json::array();
  for (const DistractorRecord& d : q.distractors) {
    json dj = {{"distractor_id", d.distractor_id},
               {"answer", d.incorrect_answer},
               {"feedback", d.gold_feedback}};
    if (d.truth) {
      dj["error_type"] = error_kind_name(d.truth->error_type);
      dj["correct_answer_token"] = d.truth->correct_answer_token;
    }
    distractors.push_back(std::move(dj));
  }
  return {{"question_id", q.question_id},
          {"question", q.question_text},
          {"correct_answer", q.correct_answer},
          {"explanation", q.explanation},
          {"has_image", q.has_image},
          {"distractors", std::move(distractors)}};
}

inline QuestionRecord question_from_json(const json& rec, const std::string& path,
                                         std::size_t line) {
  QuestionRecord q;
  q.question_id = require_string(rec, "question_id", path, line);
  q.question_text = require_string(rec, "question", path, line);
  q.correct_answer = require_string(rec, "correct_answer", path, line);
  q.explanation = require_string(rec, "explanation", path, line);
  q.has_image = require_bool(rec, "has_image", path, line);
  const json& ds = require_field(rec, "distractors", path, line);
  if (!ds.is_array() || ds.empty())
    throw IngestError(path, line, "\"distractors\" must be a nonempty array");
  for (const json& dj : ds) {
    DistractorRecord d;
    d.distractor_id = require_string(dj, "distractor_id", path, line);
    d.incorrect_answer = require_string(dj, "answer", path, line);
    d.gold_feedback = require_string(dj, "feedback", path, line);
    if (dj.contains("error_type")) {
      SyntheticTruth t;
      t.error_type = error_kind_from_name(dj.at("error_type").get<std::string>());
      if (dj.contains("correct_answer_token"))
        t.correct_answer_token = dj.at("correct_answer_token").get<std::string>();
      d.truth = t;
    }
    if (d.incorrect_answer.empty())
      throw IngestError(path, line, "distractor answer must be nonempty");
    if (d.gold_feedback.empty())
      throw IngestError(path, line, "distractor feedback must be nonempty");
    if (d.incorrect_answer == q.correct_answer)
      throw IngestError(path, line,
                        "distractor answer equals the correct answer");
    q.distractors.push_back(std::move(d));
  }
  std::set<std::string> answers;
  for (const DistractorRecord& d : q.distractors)
    if (!answers.insert(d.incorrect_answer).second)
      throw IngestError(path, line, "duplicate distractor answers in question \"" +
                                        q.question_id + "\"");
  return q;
}

inline json item_to_json(const FeedbackItem& item) {
  json rec = {{"item_id", item.item_id},
              {"question_id", item.question_id},
              {"distractor_id", item.distractor_id},
              {"question", item.input.question},
              {"correct_answer", item.input.correct_answer},
              {"explanation", item.input.explanation},
              {"incorrect_answer", item.input.incorrect_answer},
              {"feedback", item.feedback},
              {"source", source_name(item.source)}};
  if (item.ground_truth) {
    rec["error_type"] = error_kind_name(item.ground_truth->error_type);
    rec["correct_answer_token"] = item.ground_truth->correct_answer_token;
  }
  return rec;
}

inline FeedbackItem item_from_json(const json& rec, const std::string& path,
                                   std::size_t line) {
  FeedbackItem item;
  item.item_id = require_string(rec, "item_id", path, line);
  item.question_id = require_string(rec, "question_id", path, line);
  item.distractor_id = require_string(rec, "distractor_id", path, line);
  item.input.question = require_string(rec, "question", path, line);
  item.input.correct_answer = require_string(rec, "correct_answer", path, line);
  item.input.explanation = require_string(rec, "explanation", path, line);
  item.input.incorrect_answer = require_string(rec, "incorrect_answer", path, line);
  item.feedback = require_string(rec, "feedback", path, line);
  item.source = source_from_name(require_string(rec, "source", path, line));
  if (rec.contains("error_type")) {
    SyntheticTruth t;
    t.error_type = error_kind_from_name(rec.at("error_type").get<std::string>());
    if (rec.contains("correct_answer_token"))
      t.correct_answer_token = rec.at("correct_answer_token").get<std::string>();
    item.ground_truth = t;
  }
  return item;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline Corpus load_corpus(const std::string& path, bool filter_images) {
  Corpus corpus;
  corpus.origin = path;
  std::unordered_set<std::string> seen_ids;
  for (const JsonlLine& line : read_jsonl(path)) {
    QuestionRecord q = question_from_json(line.value, path, line.line_number);
    if (!seen_ids.insert(q.question_id).second)
      throw IngestError(path, line.line_number,
                        "duplicate question_id \"" + q.question_id + "\"");
    if (filter_images && q.has_image) continue;
    corpus.questions.push_back(std::move(q));
  }
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::vector<json> records;
  records.reserve(corpus.size());
  for (const QuestionRecord& q : corpus.questions)
    records.push_back(question_to_json(q));
  write_jsonl(path, records);
}

// Disjoint question-level split with the requested sizes; questions beyond
// counts.sum() are dropped. Deterministic given the seed.
inline SplitCorpus split_corpus(const Corpus& corpus,
                                const std::array<std::size_t, 3>& counts,
                                std::uint64_t seed) {
  const std::size_t total = counts[0] + counts[1] + counts[2];
  if (total > corpus.size())
    throw Error("split counts exceed corpus size (" + std::to_string(total) +
                " > " + std::to_string(corpus.size()) + ")");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "corpus.split"));
  rng.shuffle(order);

  SplitCorpus split;
  split.train.origin = corpus.origin + "#train";
  split.validation.origin = corpus.origin + "#validation";
  split.test.origin = corpus.origin + "#test";
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < counts[0]; ++i)
    split.train.questions.push_back(corpus.questions[order[cursor++]]);
  for (std::size_t i = 0; i < counts[1]; ++i)
    split.validation.questions.push_back(corpus.questions[order[cursor++]]);
  for (std::size_t i = 0; i < counts[2]; ++i)
    split.test.questions.push_back(corpus.questions[order[cursor++]]);
  return split;
}

inline std::string make_item_id(const std::string& question_id,
                                const std::string& distractor_id,
                                FeedbackSource source) {
  std::string id = question_id + ":" + distractor_id;
  if (source != FeedbackSource::gold) {
    id += ":";
    id += source_name(source);
  }
  return id;
}

// One gold item per (question, distractor), in question order then
// distractor order.
inline std::vector<FeedbackItem> flatten(const Corpus& corpus) {
  std::vector<FeedbackItem> items;
  for (const QuestionRecord& q : corpus.questions) {
    for (const DistractorRecord& d : q.distractors) {
      FeedbackItem item;
      item.item_id = make_item_id(q.question_id, d.distractor_id, FeedbackSource::gold);
      item.question_id = q.question_id;
      item.distractor_id = d.distractor_id;
      item.input = {q.question_text, q.correct_answer, q.explanation,
                    d.incorrect_answer};
      item.feedback = d.gold_feedback;
      item.source = FeedbackSource::gold;
      item.ground_truth = d.truth;
      items.push_back(std::move(item));
    }
  }
  return items;
}

// Uniform sample without replacement, preserving the input order of the kept
// items. count >= items.size() returns everything.
inline std::vector<FeedbackItem> subsample_items(const std::vector<FeedbackItem>& items,
                                                 std::size_t count,
                                                 std::uint64_t seed) {
  if (count >= items.size()) return items;
  Rng rng(derive_seed(seed, "corpus.subsample"));
  std::vector<std::size_t> picked = rng.sample_indices(items.size(), count);
  std::sort(picked.begin(), picked.end());
  std::vector<FeedbackItem> out;
  out.reserve(count);
  for (std::size_t i : picked) out.push_back(items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace synth {

enum class Op { add, sub, mul };

inline char op_symbol(Op op) {
  switch (op) {
    case Op::add: return '+';
    case Op::sub: return '-';
    case Op::mul: return '*';
  }
  throw Error("unknown op");
}

inline int apply_op(Op op, int a, int b) {
  switch (op) {
    case Op::add: return a + b;
    case Op::sub: return a - b;
    case Op::mul: return a * b;
  }
  throw Error("unknown op");
}

inline ErrorKind op_error_kind(Op op) {
  switch (op) {
    case Op::add: return ErrorKind::added;
    case Op::sub: return ErrorKind::subtracted;
    case Op::mul: return ErrorKind::multiplied;
  }
  throw Error("unknown op");
}

// One arithmetic micro-question: "what is a ∘ b?" with three distractors,
// one per applicable rule (the two wrong operations and off-by-one).
struct Blueprint {
  int a = 0;
  int b = 0;
  Op op = Op::add;
  int correct = 0;
  // (value, rule) for each distractor, in rule order
  std::vector<std::pair<int, ErrorKind>> distractors;
};

// Enumerates every single-digit (a, b, op) combination whose distractor
// values work out pairwise distinct and distinct from the correct answer.
// The off-by-one distractor takes correct+1, falling back to correct-1 when
// the former collides with a wrong-operation value.
inline std::vector<Blueprint> enumerate_blueprints() {
  std::vector<Blueprint> out;
  constexpr std::array<Op, 3> ops = {Op::add, Op::sub, Op::mul};
  for (int a = 0; a <= 9; ++a) {
    for (int b = 0; b <= 9; ++b) {
      for (Op op : ops) {
        Blueprint bp;
        bp.a = a;
        bp.b = b;
        bp.op = op;
        bp.correct = apply_op(op, a, b);
        std::vector<std::pair<int, ErrorKind>> wrong;
        for (Op other : ops) {
          if (other == op) continue;
          wrong.emplace_back(apply_op(other, a, b), op_error_kind(other));
        }
        if (wrong[0].first == wrong[1].first) continue;
        if (wrong[0].first == bp.correct || wrong[1].first == bp.correct) continue;
        int off = bp.correct + 1;
        if (off == wrong[0].first || off == wrong[1].first) {
          off = bp.correct - 1;
          if (off == wrong[0].first || off == wrong[1].first) continue;
        }
        bp.distractors = std::move(wrong);
        bp.distractors.emplace_back(off, ErrorKind::off_by_one);
        out.push_back(std::move(bp));
      }
    }
  }
  return out;
}

}  // namespace synth

// Fully offline stand-in corpus: single-digit arithmetic questions whose
// distractors each come from a named wrong-operation rule, with gold
// feedback that satisfies all five oracle predicates by construction.
inline Corpus make_synthetic_corpus(std::uint64_t seed, std::size_t n_questions) {
  if (n_questions < 1) throw Error("make_synthetic_corpus: n_questions must be >= 1");
  std::vector<synth::Blueprint> table = synth::enumerate_blueprints();
  Rng rng(derive_seed(seed, "corpus.synth"));

  Corpus corpus;
  corpus.origin = "synthetic(seed=" + std::to_string(seed) +
                  ",n=" + std::to_string(n_questions) + ")";
  std::vector<std::size_t> order;
  while (corpus.questions.size() < n_questions) {
    // draw blueprints without replacement, reshuffling once exhausted
    if (order.empty()) {
      order.resize(table.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
    }
    const synth::Blueprint& bp = table[order.back()];
    order.pop_back();

    QuestionRecord q;
    const std::size_t index = corpus.questions.size();
    q.question_id = "synth-q" + std::to_string(index);
    q.question_text = "what is " + std::to_string(bp.a) + " " +
                      synth::op_symbol(bp.op) + " " + std::to_string(bp.b) + "?";
    q.correct_answer = std::to_string(bp.correct);
    q.explanation = std::to_string(bp.a) + " " + synth::op_symbol(bp.op) + " " +
                    std::to_string(bp.b) + " = " + q.correct_answer + ".";
    q.has_image = false;
    for (std::size_t j = 0; j < bp.distractors.size(); ++j) {
      DistractorRecord d;
      d.distractor_id = "d" + std::to_string(j + 1);
      d.incorrect_answer = std::to_string(bp.distractors[j].first);
      d.gold_feedback = synth::gold_feedback(bp.distractors[j].second);
      d.truth = SyntheticTruth{bp.distractors[j].second, q.correct_answer};
      q.distractors.push_back(std::move(d));
    }
    corpus.questions.push_back(std::move(q));
  }
  return corpus;
}

}  // namespace feedalign
