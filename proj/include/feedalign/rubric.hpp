#pragma once

#include <array>
#include <cmath>
#include <string>

#include "json.hpp"

#include "feedalign/errors.hpp"

namespace feedalign {

// The five binary rubric aspects of a feedback message. Field order matches
// the evaluation question order: Correct, Revealing, Suggestion, Diagnostic,
// Positive.
struct RubricLabels {
  int correct = 0;
  int revealing = 0;
  int suggestion = 0;
  int diagnostic = 0;
  int positive = 0;

  std::array<int, 5> as_array() const {
    return {correct, revealing, suggestion, diagnostic, positive};
  }

  static RubricLabels from_array(const std::array<int, 5>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }

  bool operator==(const RubricLabels&) const = default;

  void validate() const {
    for (int v : as_array())
      if (v != 0 && v != 1) throw Error("rubric label must be 0 or 1");
  }
};

// Overall feedback quality in fifths, stored as an integer numerator so that
// equal scores compare exactly during pair construction.
class RubricScore {
public:
  RubricScore() = default;
  explicit RubricScore(int fifths) : fifths_(fifths) {
    if (fifths < 0 || fifths > 5) throw Error("rubric score out of range");
  }

  int fifths() const { return fifths_; }
  double value() const { return static_cast<double>(fifths_) / 5.0; }

  // For scores arriving from JSONL as floats; rejects values that are not a
  // multiple of 0.2 within tolerance.
  static RubricScore from_value(double v) {
    const int n = static_cast<int>(v * 5.0 + (v >= 0 ? 0.5 : -0.5));
    if (n < 0 || n > 5 || std::abs(v - n / 5.0) > 1e-9)
      throw Error("rubric score must be a multiple of 0.2 in [0,1]");
    return RubricScore(n);
  }

  auto operator<=>(const RubricScore&) const = default;

private:
  int fifths_ = 0;
};

// s = y_C * (y_C + y_R + y_S + y_D + y_P) / 5. An incorrect feedback scores
// 0 no matter what else it does.
inline RubricScore score(const RubricLabels& labels) {
  labels.validate();
  const auto a = labels.as_array();
  int sum = 0;
  for (int v : a) sum += v;
  return RubricScore(labels.correct == 1 ? sum : 0);
}

inline nlohmann::ordered_json labels_to_json(const RubricLabels& labels) {
  return {{"correct", labels.correct},
          {"revealing", labels.revealing},
          {"suggestion", labels.suggestion},
          {"diagnostic", labels.diagnostic},
          {"positive", labels.positive}};
}

inline RubricLabels labels_from_json(const nlohmann::ordered_json& j) {
  RubricLabels labels;
  labels.correct = j.at("correct").get<int>();
  labels.revealing = j.at("revealing").get<int>();
  labels.suggestion = j.at("suggestion").get<int>();
  labels.diagnostic = j.at("diagnostic").get<int>();
  labels.positive = j.at("positive").get<int>();
  labels.validate();
  return labels;
}

}  // namespace feedalign
