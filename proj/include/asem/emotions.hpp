#pragma once

#include <string>
#include <vector>

namespace asem {

enum class DatasetTag { ED, DD };

DatasetTag parse_dataset_tag(const std::string& s);
std::string to_string(DatasetTag t);

struct EmotionLabel {
    std::string name;
    int index = -1;
};

struct SentimentLabel {
    std::string name;
    int index = -1;
};

// Coarse emotion classes. ED uses the ten Plutchik classes (two of them
// secondary); DD ships with six plus no_emotion.
const std::vector<std::string>& emotion_names(DatasetTag tag);
const std::vector<std::string>& sentiment_names(DatasetTag tag);

int emotion_count(DatasetTag tag);
int sentiment_count(DatasetTag tag);

// Fine label -> coarse class. ED fine labels go through the 32-label Plutchik
// mapping; DD labels are already coarse (identity, with happiness folded into
// joy). Throws on unknown labels, naming the offender.
EmotionLabel map_emotion(const std::string& fine_label, DatasetTag tag);

// Fixed valence split. no_emotion -> neutral, DD only.
SentimentLabel sentiment_of(const EmotionLabel& emotion, DatasetTag tag);

EmotionLabel emotion_from_index(int index, DatasetTag tag);

// All 32 ED fine labels, in mapping-table order. Exposed for exhaustive tests
// and for prep-time validation messages.
const std::vector<std::string>& ed_fine_labels();

}  // namespace asem
