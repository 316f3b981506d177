// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/synthetic.hpp"

#include <array>
#include <functional>
#include <map>

#include "ptune/rng.hpp"

namespace ptune::synthetic {

namespace {

using Slots = std::map<std::string, std::string>;

const std::vector<std::string> kSymptoms = {
    "headache", "cough",     "fever",       "back pain", "chest pain",
    "nausea",   "dizziness", "a rash",      "sore throat", "fatigue"};
const std::vector<std::string> kDurations = {"two days",  "three days", "one week",
                                             "two weeks", "a month",    "five days"};
const std::vector<std::string> kDrugs = {"aspirin",    "ibuprofen",   "metformin",
                                         "lisinopril", "insulin",     "amoxicillin",
                                         "atorvastatin", "prednisone"};
const std::vector<std::string> kAllergens = {"penicillin", "peanuts",   "latex",
                                             "sulfa drugs", "shellfish", "pollen"};
const std::vector<std::string> kConditions = {"diabetes", "hypertension", "asthma",
                                              "arthritis", "migraine",    "anemia"};
const std::vector<std::string> kSurgeries = {"an appendectomy", "a knee replacement",
                                             "gallbladder removal", "a hernia repair",
                                             "a tonsillectomy"};
const std::vector<std::string> kRelatives = {"mother", "father", "sister", "brother"};
const std::vector<std::string> kBodyParts = {"knee", "shoulder", "ankle", "wrist", "elbow", "hip"};
const std::vector<std::string> kVaccines = {"flu shot", "tetanus shot", "covid vaccine",
                                            "pneumonia vaccine"};
const std::vector<std::string> kImaging = {"x-ray", "CT scan", "MRI", "ultrasound"};
const std::vector<std::string> kProcedures = {"skin biopsy", "joint injection", "wound repair",
                                              "ear cleaning"};
const std::vector<std::string> kLabs = {"blood count", "glucose", "cholesterol", "potassium"};
const std::vector<std::string> kLevels = {"normal", "high", "low"};
const std::vector<std::string> kGreetings = {
    "", "Doctor: Good morning. Patient: Good morning, doctor. ", "Doctor: Hello there. Patient: Hi. ",
    "Doctor: How are you feeling today? Patient: Not great. "};

struct Template {
  std::string header;
  int weight;
  std::function<Slots(Rng&)> slots;
  std::string dialogue;
  std::string summary;
};

const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

std::string fill(const std::string& tmpl, const Slots& slots) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      out += slots.at(tmpl.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

const std::vector<Template>& templates() {
  static const std::vector<Template> t = {
      {"GENHX", 12,
       [](Rng& r) {
         return Slots{{"age", std::to_string(20 + r.below(70))},
                      {"symptom", pick(kSymptoms, r)},
                      {"duration", pick(kDurations, r)}};
       },
       "Doctor: How old are you? Patient: I am {age} years old. Doctor: What is going on? "
       "Patient: I have had {symptom} for {duration}.",
       "The patient is a {age} year old with {symptom} for {duration}."},
      {"CC", 11,
       [](Rng& r) { return Slots{{"symptom", pick(kSymptoms, r)}, {"duration", pick(kDurations, r)}}; },
       "Doctor: What brings you in today? Patient: I have had {symptom} for {duration}.",
       "{symptom} for {duration}."},
      {"MEDICATIONS", 10, [](Rng& r) { return Slots{{"drug", pick(kDrugs, r)}}; },
       "Doctor: What medicines do you take? Patient: I take {drug} every day.", "{drug} daily."},
      {"ALLERGY", 9, [](Rng& r) { return Slots{{"allergen", pick(kAllergens, r)}}; },
       "Doctor: Are you allergic to anything? Patient: Yes, I am allergic to {allergen}.",
       "Allergic to {allergen}."},
      {"PASTMEDICALHX", 9, [](Rng& r) { return Slots{{"condition", pick(kConditions, r)}}; },
       "Doctor: Do you have any medical problems? Patient: Yes, I have {condition}.",
       "History of {condition}."},
      {"FAM/SOCHX", 8,
       [](Rng& r) { return Slots{{"relative", pick(kRelatives, r)}, {"condition", pick(kConditions, r)}}; },
       "Doctor: Does anyone in your family have health problems? Patient: My {relative} has "
       "{condition}.",
       "Family history of {condition} in the {relative}."},
      {"PASTSURGICAL", 8,
       [](Rng& r) {
         return Slots{{"surgery", pick(kSurgeries, r)}, {"years", std::to_string(2 + r.below(20))}};
       },
       "Doctor: Have you had any surgeries? Patient: I had {surgery} {years} years ago.",
       "Status post {surgery} {years} years ago."},
      {"ROS", 7,
       [](Rng& r) {
         const auto a = r.below(kSymptoms.size());
         const auto b = (a + 1 + r.below(kSymptoms.size() - 1)) % kSymptoms.size();
         return Slots{{"neg", kSymptoms[a]}, {"pos", kSymptoms[b]}};
       },
       "Doctor: Any {neg}? Patient: No. Doctor: Any {pos}? Patient: Yes, a little.",
       "Positive for {pos}. Negative for {neg}."},
      {"ASSESSMENT", 6,
       [](Rng& r) { return Slots{{"symptom", pick(kSymptoms, r)}, {"condition", pick(kConditions, r)}}; },
       "Doctor: I think your {symptom} is caused by {condition}. Patient: Okay, I understand.",
       "{symptom} due to {condition}."},
      {"EXAM", 6, [](Rng& r) { return Slots{{"part", pick(kBodyParts, r)}}; },
       "Doctor: Let me look at your {part}. There is some swelling here. Patient: It hurts when "
       "you press on it.",
       "Swelling and tenderness of the {part}."},
      {"DIAGNOSIS", 5, [](Rng& r) { return Slots{{"condition", pick(kConditions, r)}}; },
       "Doctor: The tests show that you have {condition}. Patient: What does that mean for me?",
       "{condition}."},
      {"PLAN", 5,
       [](Rng& r) { return Slots{{"drug", pick(kDrugs, r)}, {"duration", pick(kDurations, r)}}; },
       "Doctor: I want you to take {drug} and come back in {duration}. Patient: Sure, I can do "
       "that.",
       "Start {drug}. Return in {duration}."},
      {"DISPOSITION", 4, [](Rng& r) { return Slots{{"duration", pick(kDurations, r)}}; },
       "Doctor: You can go home today. Please come back in {duration}. Patient: Thank you.",
       "Discharged home. Follow up in {duration}."},
      {"EDCOURSE", 4,
       [](Rng& r) { return Slots{{"drug", pick(kDrugs, r)}, {"symptom", pick(kSymptoms, r)}}; },
       "Doctor: In the emergency room we gave you {drug} for your {symptom}. Patient: I feel "
       "better now.",
       "Given {drug} for {symptom} with improvement."},
      {"IMMUNIZATIONS", 3,
       [](Rng& r) { return Slots{{"vaccine", pick(kVaccines, r)}, {"duration", pick(kDurations, r)}}; },
       "Doctor: Are your shots up to date? Patient: I got the {vaccine} {duration} ago.",
       "Received {vaccine} {duration} ago."},
      {"IMAGING", 3,
       [](Rng& r) { return Slots{{"imaging", pick(kImaging, r)}, {"part", pick(kBodyParts, r)}}; },
       "Doctor: We did a {imaging} of your {part}. Patient: What did it show? Doctor: It was "
       "normal.",
       "{imaging} of the {part} was normal."},
      {"GYNHX", 2, [](Rng& r) { return Slots{{"duration", pick(kDurations, r)}}; },
       "Doctor: When was your last period? Patient: It was about {duration} ago.",
       "Last menstrual period {duration} ago."},
      {"PROCEDURES", 2, [](Rng& r) { return Slots{{"procedure", pick(kProcedures, r)}}; },
       "Doctor: We will do a {procedure} today. Patient: Will it hurt? Doctor: Only a little.",
       "{procedure} performed."},
      {"OTHER_HISTORY", 2, [](Rng& r) { return Slots{{"count", std::to_string(1 + r.below(30))}}; },
       "Doctor: Do you smoke? Patient: Yes, I smoke {count} cigarettes a day.",
       "Smokes {count} cigarettes per day."},
      {"LABS", 2,
       [](Rng& r) { return Slots{{"lab", pick(kLabs, r)}, {"level", pick(kLevels, r)}}; },
       "Doctor: Your {lab} came back {level}. Patient: Is that bad?", "{lab} {level}."},
  };
  return t;
}

}  // namespace

const std::vector<std::string>& section_headers() {
  static const std::vector<std::string> h = [] {
    std::vector<std::string> out;
    for (const auto& t : templates()) out.push_back(t.header);
    return out;
  }();
  return h;
}

std::vector<corpus::Example> generate(std::size_t count, std::uint64_t seed,
                                      const std::string& id_prefix) {
  const auto& ts = templates();
  int total = 0;
  for (const auto& t : ts) total += t.weight;
  Rng rng(seed);
  std::vector<corpus::Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto x = static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
    std::size_t k = 0;
    while (x >= ts[k].weight) x -= ts[k++].weight;
    const auto& t = ts[k];
    const Slots slots = t.slots(rng);
    const std::string& greeting = pick(kGreetings, rng);
    out.push_back({id_prefix + std::to_string(i), t.header, greeting + fill(t.dialogue, slots),
                   fill(t.summary, slots)});
  }
  return out;
}

corpus::SplitSet generate_splits(std::size_t train, std::size_t validation, std::size_t test,
                                 std::uint64_t seed) {
  return {generate(train, derive_seed(seed, 1), "train-"),
          generate(validation, derive_seed(seed, 2), "val-"),
          generate(test, derive_seed(seed, 3), "test-")};
}

std::string lm_document(const corpus::Example& example) {
  return example.dialogue + "\nSummary:" + example.summary;
}

std::vector<std::string> lm_corpus(std::size_t documents, std::uint64_t seed) {
  std::vector<std::string> texts;
  texts.reserve(documents);
  for (const auto& e : generate(documents, seed, "lm-")) texts.push_back(lm_document(e));
  return texts;
}

}  // namespace ptune::synthetic
