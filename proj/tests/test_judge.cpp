#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "feedalign/backend.hpp"
#include "feedalign/corpus.hpp"
#include "feedalign/judge.hpp"

using namespace feedalign;

namespace {

FeedbackItem sample_item() {
  FeedbackItem item;
  item.item_id = "q1:d1";
  item.question_id = "q1";
  item.distractor_id = "d1";
  item.input = {"emma works 36 hours a week. write this as a fraction in its "
                "simplest form.",
                "3/14",
                "There are 24 x 7 = 168 hours in a week, so the fraction is "
                "36/168. This simplifies to 18/84 = 9/42 = 3/14.",
                "18/84"};
  item.feedback = "It looks like you have simplified, but not fully.";
  item.source = FeedbackSource::gold;
  return item;
}

// Judge output for the sample item, with per-question explanations followed
// by Answer lines, as the evaluation prompt requests.
const char* kWorkedOutput =
    "1. Explanation: The feedback is correct in stating that the student has "
    "simplified, but not fully. The student stopped at 18/84, which can be "
    "further simplified to 3/14. So, the feedback does not make any incorrect "
    "statements. Answer: No.\n\n"
    "2. Explanation: The feedback does not provide the correct answer. It "
    "only indicates that the student's answer is not fully simplified. "
    "Answer: No.\n\n"
    "3. Explanation: The feedback does not provide specific suggestions on "
    "how to improve the answer. It only states that the student has not fully "
    "simplified the fraction. Answer: No.\n\n"
    "4. Explanation: The feedback correctly identifies that the student's "
    "misconception is not fully simplifying the fraction. Answer: Yes.\n\n"
    "5. Explanation: The feedback is neutral in tone. It points out the error "
    "but does not use any positive or encouraging language. Answer: No.\n";

}  // namespace

TEST_CASE("build_eval_prompt embeds every field and the five questions") {
  const FeedbackItem item = sample_item();
  const PromptPair prompt = build_eval_prompt(item);
  CHECK(prompt.system_text == std::string("You are a math education expert."));
  CHECK(prompt.user_text.find("Question: " + item.input.question) != std::string::npos);
  CHECK(prompt.user_text.find("Correct Answer: 3/14") != std::string::npos);
  CHECK(prompt.user_text.find("Solution: ") != std::string::npos);
  CHECK(prompt.user_text.find(item.input.explanation) != std::string::npos);
  CHECK(prompt.user_text.find("Incorrect Answer: 18/84") != std::string::npos);
  CHECK(prompt.user_text.find("Feedback: " + item.feedback) != std::string::npos);

  const EvalQuestionSet& set = eval_question_set();
  std::size_t prev = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string numbered = std::to_string(i + 1) + ". " + set.questions[i];
    const std::size_t pos = prompt.user_text.find(numbered);
    REQUIRE(pos != std::string::npos);
    CHECK(pos > prev);  // in order
    prev = pos;
  }
}

TEST_CASE("prompts for items differing only in feedback differ only there") {
  FeedbackItem a = sample_item();
  FeedbackItem b = sample_item();
  b.feedback = "Something else entirely.";
  const std::string ua = build_eval_prompt(a).user_text;
  const std::string ub = build_eval_prompt(b).user_text;
  // line-by-line: exactly one differing line, the Feedback one
  std::vector<std::string> la, lb;
  {
    std::istringstream sa(ua), sb(ub);
    std::string line;
    while (std::getline(sa, line)) la.push_back(line);
    while (std::getline(sb, line)) lb.push_back(line);
  }
  REQUIRE(la.size() == lb.size());
  int differing = 0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i] != lb[i]) {
      ++differing;
      CHECK(la[i].rfind("Feedback: ", 0) == 0);
    }
  }
  CHECK(differing == 1);
}

TEST_CASE("parse_judge_response handles the worked example") {
  const RubricLabels labels = parse_judge_response(kWorkedOutput);
  CHECK(labels == RubricLabels{1, 1, 0, 1, 0});
  CHECK(score(labels).value() == 0.6);
}

TEST_CASE("parse_judge_response flips the negated items on all-yes input") {
  std::string text;
  for (int i = 1; i <= 5; ++i)
    text += std::to_string(i) + ". Answer: Yes.\n";
  CHECK(parse_judge_response(text) == RubricLabels{0, 0, 1, 1, 1});
}

TEST_CASE("parse_judge_response reports missing items") {
  std::string text;
  for (int i = 1; i <= 4; ++i)
    text += std::to_string(i) + ". Answer: Yes.\n";
  try {
    parse_judge_response(text);
    FAIL("expected JudgeParseError");
  } catch (const JudgeParseError& e) {
    REQUIRE(e.failed_items() == std::vector<int>{5});
  }
}

TEST_CASE("parse_judge_response rejects ambiguous answers") {
  std::string text = "1. Answer: Yes or No, hard to say.\n";
  for (int i = 2; i <= 5; ++i)
    text += std::to_string(i) + ". Answer: Yes.\n";
  try {
    parse_judge_response(text);
    FAIL("expected JudgeParseError");
  } catch (const JudgeParseError& e) {
    REQUIRE(e.failed_items() == std::vector<int>{1});
  }
}

TEST_CASE("parse_judge_response takes the final answer marker of a block") {
  std::string text =
      "1. I would answer Yes at first glance, but on reflection the "
      "statements check out. Final Answer: No.\n";
  for (int i = 2; i <= 5; ++i)
    text += std::to_string(i) + ". Answer: No.\n";
  const RubricLabels labels = parse_judge_response(text);
  CHECK(labels.correct == 1);  // item 1: "No" flipped
}

TEST_CASE("render/parse round trip is the identity on all 32 label vectors") {
  for (int mask = 0; mask < 32; ++mask) {
    std::array<int, 5> a{};
    for (int bit = 0; bit < 5; ++bit) a[bit] = (mask >> bit) & 1;
    const RubricLabels labels = RubricLabels::from_array(a);
    CHECK(parse_judge_response(render_judge_response(labels)) == labels);
  }
}

TEST_CASE("annotate parses a replayed response and scores it") {
  ReplayBackend backend(kWorkedOutput);
  JudgeConfig config;
  const std::vector<FeedbackItem> items = {sample_item()};
  const std::vector<AnnotatedFeedback> out = annotate(items, backend, config);
  REQUIRE(out.size() == 1);
  CHECK(out[0].item_id == "q1:d1");
  CHECK(out[0].labels == RubricLabels{1, 1, 0, 1, 0});
  CHECK(out[0].score_value.value() == 0.6);
  CHECK(out[0].raw_response == kWorkedOutput);
  CHECK(out[0].judge_id == "gpt-4");
  CHECK_FALSE(out[0].fallback);
}

TEST_CASE("annotate falls back to all-zero labels after retry exhaustion") {
  ReplayBackend backend("total garbage with no numbered answers");
  JudgeConfig config;
  config.retries = 2;
  const std::vector<FeedbackItem> items = {sample_item()};
  const std::vector<AnnotatedFeedback> out = annotate(items, backend, config);
  REQUIRE(out.size() == 1);
  CHECK(out[0].labels == RubricLabels{0, 0, 0, 0, 0});
  CHECK(out[0].score_value.value() == 0.0);
  CHECK(out[0].fallback);
  CHECK(backend.calls() == 3);  // first try + 2 retries
}

TEST_CASE("annotate survives hard backend failures without crashing") {
  ThrowingBackend backend(/*transient=*/false);
  JudgeConfig config;
  const std::vector<FeedbackItem> items = {sample_item()};
  const std::vector<AnnotatedFeedback> out = annotate(items, backend, config);
  REQUIRE(out.size() == 1);
  CHECK(out[0].fallback);
  CHECK(out[0].score_value.value() == 0.0);
}

TEST_CASE("annotate on an empty list returns an empty result") {
  ReplayBackend backend("x");
  JudgeConfig config;
  CHECK(annotate({}, backend, config).empty());
}

TEST_CASE("parallel annotate matches the serial run") {
  const Corpus corpus = make_synthetic_corpus(3, 10);
  std::vector<FeedbackItem> items = flatten(corpus);

  // deterministic judge: render the oracle labels as a response
  class OracleChat : public ChatBackend {
  public:
    explicit OracleChat(std::vector<FeedbackItem> items) : items_(std::move(items)) {}
    std::string send(const ChatRequest& request) override {
      for (const FeedbackItem& item : items_) {
        if (request.user_text.find("Feedback: " + item.feedback) != std::string::npos &&
            request.user_text.find("Question: " + item.input.question) !=
                std::string::npos)
          return render_judge_response(oracle_judge(item).labels);
      }
      return "";
    }
    std::string id() const override { return "oracle-chat"; }

  private:
    std::vector<FeedbackItem> items_;
  };

  OracleChat backend(items);
  JudgeConfig serial;
  JudgeConfig parallel;
  parallel.parallelism = 8;
  const auto a = annotate(items, backend, serial);
  const auto b = annotate(items, backend, parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].item_id == b[i].item_id);
    CHECK(a[i].labels == b[i].labels);
  }
}

TEST_CASE("oracle judge predicates") {
  const Corpus corpus = make_synthetic_corpus(31, 5);
  std::vector<FeedbackItem> items = flatten(corpus);
  FeedbackItem item = items[0];
  REQUIRE(item.ground_truth.has_value());

  SECTION("gold feedback satisfies every predicate") {
    const AnnotatedFeedback a = oracle_judge(item);
    CHECK(a.labels == RubricLabels{1, 1, 1, 1, 1});
    CHECK(a.judge_id == "oracle");
  }

  SECTION("revealing the correct answer clears y_R") {
    item.feedback += " the answer is " + item.ground_truth->correct_answer_token + ".";
    const AnnotatedFeedback a = oracle_judge(item);
    CHECK(a.labels.revealing == 0);
    CHECK(a.labels.correct == 1);
    CHECK(a.score_value.value() == 0.8);
  }

  SECTION("naming a wrong error kind zeroes the score") {
    ErrorKind wrong = ErrorKind::added;
    if (item.ground_truth->error_type == ErrorKind::added)
      wrong = ErrorKind::multiplied;
    item.feedback = std::string(synth::diagnosis_clause(wrong)) +
                    ". try it again step by step. keep going!";
    const AnnotatedFeedback a = oracle_judge(item);
    CHECK(a.labels.correct == 0);
    CHECK(a.labels.diagnostic == 0);
    CHECK(a.score_value.value() == 0.0);
  }

  SECTION("empty feedback is incorrect with score 0") {
    item.feedback = "";
    const AnnotatedFeedback a = oracle_judge(item);
    CHECK(a.labels.correct == 0);
    CHECK(a.score_value.value() == 0.0);
  }

  SECTION("missing synthetic truth is an error") {
    item.ground_truth.reset();
    CHECK_THROWS_AS(oracle_judge(item), Error);
  }

  SECTION("pure: same item always yields the same labels") {
    const AnnotatedFeedback a = oracle_judge(items[1]);
    const AnnotatedFeedback b = oracle_judge(items[1]);
    CHECK(a.labels == b.labels);
  }
}

TEST_CASE("every annotation satisfies score = score(labels)") {
  const Corpus corpus = make_synthetic_corpus(13, 10);
  const std::vector<FeedbackItem> items = flatten(corpus);
  const std::vector<AnnotatedFeedback> out = oracle_annotate(items);
  REQUIRE(out.size() == items.size());
  for (const AnnotatedFeedback& a : out)
    CHECK(a.score_value.fifths() == score(a.labels).fifths());
}

TEST_CASE("annotation JSONL round trip") {
  const Corpus corpus = make_synthetic_corpus(19, 3);
  const std::vector<AnnotatedFeedback> out = oracle_annotate(flatten(corpus));
  for (const AnnotatedFeedback& a : out) {
    const AnnotatedFeedback back = annotation_from_json(annotation_to_json(a), "mem", 1);
    CHECK(back.item_id == a.item_id);
    CHECK(back.labels == a.labels);
    CHECK(back.score_value.fifths() == a.score_value.fifths());
    CHECK(back.judge_id == a.judge_id);
  }
}
