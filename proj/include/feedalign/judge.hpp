#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "feedalign/backend.hpp"
#include "feedalign/corpus.hpp"
#include "feedalign/rubric.hpp"
#include "feedalign/text.hpp"

namespace feedalign {

// ---------------------------------------------------------------------------
// Evaluation prompt
// ---------------------------------------------------------------------------

// The five yes/no evaluation questions, in rubric order. The first two are
// asked negated, so their parsed answers are flipped.
struct EvalQuestionSet {
  std::array<std::string, 5> questions;
  std::array<bool, 5> negated;
};

inline const EvalQuestionSet& eval_question_set() {
  static const EvalQuestionSet set = {
      {"Does the feedback make any incorrect statements?",
       "Does the feedback directly reveal the answer to the question?",
       "Does the feedback give suggestions to the student on how to improve "
       "the answer?",
       "Does the feedback correctly point out the misconception underlying "
       "the student's answer?",
       "Does the feedback have a positive or encouraging tone?"},
      {true, true, false, false, false}};
  return set;
}

inline const char* kJudgeSystemText = "You are a math education expert.";

struct PromptPair {
  std::string system_text;
  std::string user_text;
};

// Evaluation prompt. Unlike generation prompts this one includes the worked
// solution, since the judge needs it to check correctness.
inline PromptPair build_eval_prompt(const FeedbackItem& item) {
  const EvalQuestionSet& set = eval_question_set();
  std::string user;
  user += "Your job is to evaluate feedback given to students on math problems.\n";
  user +=
      "Here is the question, the correct solution, the incorrect answer the "
      "student gave, and the feedback given to the student:\n";
  user += "Question: " + item.input.question + "\n";
  user += "Correct Answer: " + item.input.correct_answer + "\n";
  user += "Solution: " + item.input.explanation + "\n";
  user += "Incorrect Answer: " + item.input.incorrect_answer + "\n";
  user += "Feedback: " + item.feedback + "\n";
  user +=
      "For the following questions, provide a short explanation and then "
      "answer with \"Yes\" or \"No\":\n";
  for (std::size_t i = 0; i < set.questions.size(); ++i)
    user += std::to_string(i + 1) + ". " + set.questions[i] + "\n";
  return {kJudgeSystemText, user};
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

namespace detail {

enum class YesNo { yes, no, missing, ambiguous };

// Scans one numbered block. Walking backwards over the "Answer" markers,
// takes the yes/no tokens between the last marker that has any and the next
// marker; a span containing both words is ambiguous rather than guessed.
inline YesNo extract_answer(std::string_view block) {
  std::vector<std::size_t> markers;
  for (std::size_t pos = find_ci(block, "answer"); pos != std::string_view::npos;
       pos = find_ci(block, "answer", pos + 1))
    markers.push_back(pos);
  if (markers.empty()) return YesNo::missing;

  auto word_at = [&](std::size_t i, std::string_view word) {
    if (find_ci(block.substr(i, word.size()), word) != 0) return false;
    // token boundaries: previous and next characters must not be letters
    if (i > 0 && std::isalpha(static_cast<unsigned char>(block[i - 1]))) return false;
    const std::size_t end = i + word.size();
    if (end < block.size() && std::isalpha(static_cast<unsigned char>(block[end])))
      return false;
    return true;
  };

  for (std::size_t m = markers.size(); m-- > 0;) {
    const std::size_t begin = markers[m] + 6;  // past "answer"
    const std::size_t end = (m + 1 < markers.size()) ? markers[m + 1] : block.size();
    bool saw_yes = false;
    bool saw_no = false;
    for (std::size_t i = begin; i < end && i < block.size(); ++i) {
      if (word_at(i, "yes")) saw_yes = true;
      if (word_at(i, "no")) saw_no = true;
    }
    if (saw_yes && saw_no) return YesNo::ambiguous;
    if (saw_yes) return YesNo::yes;
    if (saw_no) return YesNo::no;
  }
  return YesNo::missing;
}

}  // namespace detail

// Parses a judge response into rubric labels: per numbered item, the final
// Yes/No after an "Answer" marker, with items 1 and 2 flipped afterwards
// because their questions are negated. Throws JudgeParseError listing the
// items that could not be resolved.
inline RubricLabels parse_judge_response(const std::string& text) {
  const EvalQuestionSet& set = eval_question_set();

  // locate the start of each numbered item ("1." .. "5.")
  std::array<std::size_t, 5> starts{};
  std::size_t search_from = 0;
  for (int i = 0; i < 5; ++i) {
    const std::string needle = std::to_string(i + 1) + ".";
    std::size_t pos = text.find(needle, search_from);
    starts[i] = pos;
    if (pos != std::string::npos) search_from = pos + needle.size();
  }

  std::array<int, 5> raw{};
  std::vector<int> failed;
  for (int i = 0; i < 5; ++i) {
    if (starts[i] == std::string::npos) {
      failed.push_back(i + 1);
      continue;
    }
    std::size_t end = std::string::npos;
    for (int j = i + 1; j < 5; ++j) {
      if (starts[j] != std::string::npos) {
        end = starts[j];
        break;
      }
    }
    const std::string_view block =
        std::string_view(text).substr(starts[i], end == std::string::npos
                                                     ? std::string::npos
                                                     : end - starts[i]);
    switch (detail::extract_answer(block)) {
      case detail::YesNo::yes: raw[i] = 1; break;
      case detail::YesNo::no: raw[i] = 0; break;
      default: failed.push_back(i + 1); break;
    }
  }
  if (!failed.empty()) {
    std::string msg = "judge response missing/ambiguous answers for items:";
    for (int i : failed) msg += " " + std::to_string(i);
    throw JudgeParseError(failed, msg);
  }

  std::array<int, 5> flipped{};
  for (int i = 0; i < 5; ++i)
    flipped[i] = set.negated[i] ? 1 - raw[i] : raw[i];
  return RubricLabels::from_array(flipped);
}

// Renders labels back into a minimal five-line response, inverting the
// negation flips. parse_judge_response(render_judge_response(y)) == y for
// all 32 label vectors; also handy as a deterministic judge stand-in.
inline std::string render_judge_response(const RubricLabels& labels) {
  const EvalQuestionSet& set = eval_question_set();
  const std::array<int, 5> a = labels.as_array();
  std::string out;
  for (int i = 0; i < 5; ++i) {
    const int raw = set.negated[i] ? 1 - a[i] : a[i];
    out += std::to_string(i + 1) + ". Answer: ";
    out += raw == 1 ? "Yes" : "No";
    out += ".\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

struct AnnotatedFeedback {
  std::string item_id;
  RubricLabels labels;
  RubricScore score_value;  // always score(labels)
  std::string raw_response;
  std::string judge_id;
  bool fallback = false;  // true when the retry budget was exhausted

  static AnnotatedFeedback make(std::string item_id, RubricLabels labels,
                                std::string raw_response, std::string judge_id,
                                bool fallback = false) {
    AnnotatedFeedback a;
    a.item_id = std::move(item_id);
    a.labels = labels;
    a.score_value = score(labels);
    a.raw_response = std::move(raw_response);
    a.judge_id = std::move(judge_id);
    a.fallback = fallback;
    return a;
  }
};

struct JudgeConfig {
  std::string model_id = "gpt-4";
  double temperature = 0.0;
  int max_response_tokens = 300;
  int retries = 2;      // re-asks after a parse failure
  int parallelism = 1;  // in-flight backend calls
  ResponseCache* cache = nullptr;
  RetryPolicy transport_retry = {};
};

// Annotates one item, retrying on parse failures. Exhaustion (or a hard
// backend failure) falls back to all-zero labels with the fallback flag set.
inline AnnotatedFeedback annotate_item(const FeedbackItem& item,
                                       ChatBackend& backend,
                                       const JudgeConfig& config) {
  const PromptPair prompt = build_eval_prompt(item);
  ChatRequest request;
  request.system_text = prompt.system_text;
  request.user_text = prompt.user_text;
  request.model_id = config.model_id;
  request.temperature = config.temperature;
  request.max_response_tokens = config.max_response_tokens;

  std::string last_response;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    request.attempt = attempt;
    try {
      last_response = llm_call(backend, request, config.cache, config.transport_retry);
      const RubricLabels labels = parse_judge_response(last_response);
      return AnnotatedFeedback::make(item.item_id, labels, last_response,
                                     config.model_id);
    } catch (const JudgeParseError&) {
      // retry with a bumped attempt salt
    } catch (const BackendError& e) {
      std::cerr << "[judge] backend failure on item " << item.item_id << ": "
                << e.what() << "\n";
      break;
    }
  }
  std::cerr << "[judge] assigning all-zero labels to item " << item.item_id
            << " after retry exhaustion\n";
  return AnnotatedFeedback::make(item.item_id, RubricLabels{}, last_response,
                                 config.model_id, /*fallback=*/true);
}

// Batch annotation with up to config.parallelism in-flight calls. Results
// land at their item's index, so the output order matches the input order
// regardless of completion order.
inline std::vector<AnnotatedFeedback> annotate(const std::vector<FeedbackItem>& items,
                                               ChatBackend& backend,
                                               const JudgeConfig& config) {
  std::vector<AnnotatedFeedback> results(items.size());
  const int workers = std::max(1, std::min<int>(config.parallelism,
                                                static_cast<int>(items.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i)
      results[i] = annotate_item(items[i], backend, config);
    return results;
  }
  std::atomic<std::size_t> cursor{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= items.size()) return;
        results[i] = annotate_item(items[i], backend, config);
      }
    });
  }
  for (std::thread& t : threads) t.join();
  return results;
}

// ---------------------------------------------------------------------------
// Oracle judge
// ---------------------------------------------------------------------------

// Deterministic rubric labeler for synthetic items. Pure string predicates
// over the marker vocabulary; requires the item's SyntheticTruth.
inline AnnotatedFeedback oracle_judge(const FeedbackItem& item) {
  if (!item.ground_truth)
    throw Error("oracle_judge: item " + item.item_id + " carries no synthetic truth");
  const SyntheticTruth& truth = *item.ground_truth;
  const std::string& f = item.feedback;

  bool names_wrong_kind = false;
  for (ErrorKind kind : synth::kAllErrorKinds) {
    if (kind == truth.error_type) continue;
    if (contains_token_phrase(f, synth::error_marker(kind))) names_wrong_kind = true;
  }

  RubricLabels labels;
  labels.correct = (!names_wrong_kind && !tokenize_words(f).empty()) ? 1 : 0;
  labels.revealing =
      contains_token_phrase(f, truth.correct_answer_token) ? 0 : 1;
  labels.suggestion = contains_token_phrase(f, synth::kSuggestionMarker) ? 1 : 0;
  labels.diagnostic =
      contains_token_phrase(f, synth::error_marker(truth.error_type)) ? 1 : 0;
  labels.positive = contains_token_phrase(f, synth::kEncouragementMarker) ? 1 : 0;

  std::string trace = "oracle:";
  trace += names_wrong_kind ? " wrong-kind-marker" : " no-wrong-kind-marker";
  trace += labels.revealing ? "" : " reveals-answer";
  return AnnotatedFeedback::make(item.item_id, labels, trace, "oracle");
}

inline std::vector<AnnotatedFeedback> oracle_annotate(
    const std::vector<FeedbackItem>& items) {
  std::vector<AnnotatedFeedback> out;
  out.reserve(items.size());
  for (const FeedbackItem& item : items) out.push_back(oracle_judge(item));
  return out;
}

// ---------------------------------------------------------------------------
// Annotation JSONL
// ---------------------------------------------------------------------------

inline json annotation_to_json(const AnnotatedFeedback& a) {
  return {{"item_id", a.item_id},
          {"labels", labels_to_json(a.labels)},
          {"score", a.score_value.value()},
          {"raw_response", a.raw_response},
          {"judge_id", a.judge_id},
          {"fallback", a.fallback}};
}

inline AnnotatedFeedback annotation_from_json(const json& rec, const std::string& path,
                                              std::size_t line) {
  AnnotatedFeedback a;
  a.item_id = require_string(rec, "item_id", path, line);
  a.labels = labels_from_json(require_field(rec, "labels", path, line));
  a.score_value = score(a.labels);
  const json& score_field = require_field(rec, "score", path, line);
  if (!score_field.is_number())
    throw IngestError(path, line, "field \"score\" must be a number");
  if (std::abs(score_field.get<double>() - a.score_value.value()) > 1e-9)
    throw IngestError(path, line, "score does not match labels");
  a.raw_response = require_string(rec, "raw_response", path, line);
  a.judge_id = require_string(rec, "judge_id", path, line);
  if (a.judge_id.empty()) throw IngestError(path, line, "judge_id must be nonempty");
  a.fallback = rec.contains("fallback") ? rec.at("fallback").get<bool>() : false;
  return a;
}

}  // namespace feedalign
