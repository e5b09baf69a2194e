#include "asem/emotions.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace asem {

namespace {

const std::vector<std::string> kEdEmotions = {"joy",   "surprise", "anticipation", "love",
                                              "trust", "anger",    "disgust",      "fear",
                                              "sadness", "remorse"};

const std::vector<std::string> kDdEmotions = {"joy",  "surprise", "anger",     "disgust",
                                              "fear", "sadness",  "no_emotion"};

const std::vector<std::string> kEdSentiments = {"positive", "negative"};
const std::vector<std::string> kDdSentiments = {"positive", "negative", "neutral"};

// 32 ED fine labels and their coarse class.
const std::vector<std::pair<std::string, std::string>> kEdMapping = {
    {"excited", "joy"},        {"joyful", "joy"},         {"grateful", "joy"},
    {"content", "joy"},        {"confident", "joy"},      {"surprised", "surprise"},
    {"impressed", "surprise"}, {"anticipating", "anticipation"},
    {"hopeful", "anticipation"}, {"prepared", "anticipation"},
    {"sentimental", "love"},   {"caring", "love"},        {"nostalgic", "love"},
    {"proud", "trust"},        {"trusting", "trust"},     {"faithful", "trust"},
    {"angry", "anger"},        {"annoyed", "anger"},      {"furious", "anger"},
    {"jealous", "anger"},      {"disgusted", "disgust"},  {"afraid", "fear"},
    {"terrified", "fear"},     {"anxious", "fear"},       {"apprehensive", "fear"},
    {"embarrassed", "fear"},   {"sad", "sadness"},        {"lonely", "sadness"},
    {"devastated", "sadness"}, {"disappointed", "sadness"}, {"guilty", "remorse"},
    {"ashamed", "remorse"}};

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return (char)std::tolower(c); });
    return s;
}

int index_of(const std::vector<std::string>& names, const std::string& name) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return (int)i;
    return -1;
}

}  // namespace

DatasetTag parse_dataset_tag(const std::string& s) {
    std::string l = lower(s);
    if (l == "ed") return DatasetTag::ED;
    if (l == "dd") return DatasetTag::DD;
    throw std::invalid_argument("unknown dataset tag: " + s);
}

std::string to_string(DatasetTag t) { return t == DatasetTag::ED ? "ED" : "DD"; }

const std::vector<std::string>& emotion_names(DatasetTag tag) {
    return tag == DatasetTag::ED ? kEdEmotions : kDdEmotions;
}

const std::vector<std::string>& sentiment_names(DatasetTag tag) {
    return tag == DatasetTag::ED ? kEdSentiments : kDdSentiments;
}

int emotion_count(DatasetTag tag) { return (int)emotion_names(tag).size(); }
int sentiment_count(DatasetTag tag) { return (int)sentiment_names(tag).size(); }

EmotionLabel map_emotion(const std::string& fine_label, DatasetTag tag) {
    std::string l = lower(fine_label);
    if (tag == DatasetTag::ED) {
        for (const auto& [fine, coarse] : kEdMapping)
            if (fine == l) return {coarse, index_of(kEdEmotions, coarse)};
        throw std::invalid_argument("unknown ED fine emotion: " + fine_label);
    }
    if (l == "happiness") l = "joy";  // DD's name for the class
    if (l == "no emotion") l = "no_emotion";
    int idx = index_of(kDdEmotions, l);
    if (idx < 0) throw std::invalid_argument("unknown DD emotion: " + fine_label);
    return {kDdEmotions[(size_t)idx], idx};
}

SentimentLabel sentiment_of(const EmotionLabel& emotion, DatasetTag tag) {
    static const std::vector<std::string> kPositive = {"joy", "surprise", "anticipation", "love",
                                                       "trust"};
    static const std::vector<std::string> kNegative = {"anger", "disgust", "fear", "sadness",
                                                       "remorse"};
    const auto& names = sentiment_names(tag);
    if (emotion.name == "no_emotion") {
        if (tag == DatasetTag::ED)
            throw std::invalid_argument("no_emotion is not a legal ED class");
        return {"neutral", index_of(names, "neutral")};
    }
    if (std::find(kPositive.begin(), kPositive.end(), emotion.name) != kPositive.end())
        return {"positive", index_of(names, "positive")};
    if (std::find(kNegative.begin(), kNegative.end(), emotion.name) != kNegative.end())
        return {"negative", index_of(names, "negative")};
    throw std::invalid_argument("emotion has no sentiment mapping: " + emotion.name);
}

EmotionLabel emotion_from_index(int index, DatasetTag tag) {
    const auto& names = emotion_names(tag);
    if (index < 0 || index >= (int)names.size())
        throw std::out_of_range("emotion index out of range: " + std::to_string(index));
    return {names[(size_t)index], index};
}

const std::vector<std::string>& ed_fine_labels() {
    static const std::vector<std::string> labels = [] {
        std::vector<std::string> v;
        for (const auto& [fine, coarse] : kEdMapping) v.push_back(fine);
        return v;
    }();
    return labels;
}

}  // namespace asem
