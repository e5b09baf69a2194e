#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "asem/emotions.hpp"
#include "asem/vocab.hpp"

namespace asem {

struct RawTurn {
    std::string speaker;
    std::string text;
    std::string fine_emotion;  // per-turn for DD; usually dialogue-level for ED
};

struct RawDialogue {
    std::string id;
    std::vector<RawTurn> turns;
    DatasetTag tag = DatasetTag::ED;
};

// One training example: respond to current_turn given the preceding turns.
struct MappedDialogue {
    std::vector<std::vector<std::string>> context_turns;
    std::vector<std::string> current_turn;
    std::vector<std::string> response;
    EmotionLabel emotion;
    SentimentLabel sentiment;
};

struct EncodedExample {
    std::vector<std::vector<int>> context_turns;
    std::vector<int> current_turn;
    std::vector<int> response;
    int emotion = -1;
    int sentiment = -1;
};

struct Batch {
    int size = 0;  // B
    int context_len = 0;
    int response_len = 0;
    std::vector<int> context_ids;      // [B * context_len]
    std::vector<float> context_mask;   // 1 on real tokens
    std::vector<std::pair<int, int>> boundary;  // [begin, end) of the current turn per example
    std::vector<int> response_ids;     // [B * response_len], SOS ... EOS PAD*
    std::vector<float> response_mask;
    std::vector<int> sentiment_targets;
    std::vector<int> emotion_targets;
};

struct BatchStats {
    int truncated_contexts = 0;
    int truncated_responses = 0;
};

struct CorpusSplits {
    std::vector<MappedDialogue> train, valid, test;
};

// TSV (header: conversation_id, turn_index, speaker, text, fine_emotion) or
// JSONL with the same field names, chosen by extension.
std::vector<RawDialogue> read_raw(const std::string& path, DatasetTag tag);

// Every even-indexed turn is a speaker statement, every odd-indexed turn the
// listener's reply; each reply becomes one example. ED dialogues carry one
// label; DD labels ride on the statement turn.
std::vector<MappedDialogue> expand_dialogues(const std::vector<RawDialogue>& dialogues);

void write_mapped_jsonl(const std::string& path, const std::vector<MappedDialogue>& examples);
std::vector<MappedDialogue> read_mapped_jsonl(const std::string& path);

std::vector<std::vector<std::string>> all_token_sequences(
    const std::vector<MappedDialogue>& examples);

std::vector<EncodedExample> encode_examples(const std::vector<MappedDialogue>& examples,
                                            const Vocabulary& vocab);

// Contexts are history turns in order followed by the current turn; when the
// total exceeds max_len the oldest history tokens go first. Responses are
// capped at max_len tokens before SOS/EOS framing.
std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples, int batch_size,
                                int max_len, BatchStats* stats = nullptr);

// Deterministic 80/10/10 by seeded shuffle.
CorpusSplits split_dialogues(std::vector<MappedDialogue> examples, uint64_t seed);

}  // namespace asem
