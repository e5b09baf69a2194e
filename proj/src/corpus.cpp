#include "asem/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "asem/rng.hpp"
#include "asem/text.hpp"

namespace asem {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_tsv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

struct RawRow {
    std::string conversation_id;
    long long turn_index = 0;
    std::string speaker;
    std::string text;
    std::string fine_emotion;
};

std::vector<RawRow> read_rows_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
    auto header = split_tsv_line(line);
    std::map<std::string, int> col;
    for (size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = (int)i;
    for (const char* need : {"conversation_id", "turn_index", "speaker", "text", "fine_emotion"})
        if (!col.count(need))
            throw std::runtime_error(path + ": missing column '" + std::string(need) + "'");
    std::vector<RawRow> rows;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto f = split_tsv_line(line);
        if (f.size() < header.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": short row");
        RawRow r;
        r.conversation_id = trim(f[(size_t)col["conversation_id"]]);
        r.turn_index = std::stoll(trim(f[(size_t)col["turn_index"]]));
        r.speaker = trim(f[(size_t)col["speaker"]]);
        r.text = trim(f[(size_t)col["text"]]);
        r.fine_emotion = trim(f[(size_t)col["fine_emotion"]]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<RawRow> read_rows_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::vector<RawRow> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        RawRow r;
        r.conversation_id = j.at("conversation_id").get<std::string>();
        r.turn_index = j.at("turn_index").get<long long>();
        r.speaker = j.at("speaker").get<std::string>();
        r.text = trim(j.at("text").get<std::string>());
        r.fine_emotion = j.value("fine_emotion", std::string());
        rows.push_back(std::move(r));
    }
    return rows;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<RawDialogue> read_raw(const std::string& path, DatasetTag tag) {
    auto rows = ends_with(path, ".jsonl") ? read_rows_jsonl(path) : read_rows_tsv(path);
    if (rows.empty()) throw std::runtime_error("dataset has no rows: " + path);
    // group by conversation, keep first-seen order
    std::vector<std::string> order;
    std::map<std::string, std::vector<RawRow>> by_conv;
    for (auto& r : rows) {
        if (!by_conv.count(r.conversation_id)) order.push_back(r.conversation_id);
        by_conv[r.conversation_id].push_back(std::move(r));
    }
    std::vector<RawDialogue> out;
    for (const auto& id : order) {
        auto& turns = by_conv[id];
        std::stable_sort(turns.begin(), turns.end(),
                         [](const RawRow& a, const RawRow& b) { return a.turn_index < b.turn_index; });
        RawDialogue d;
        d.id = id;
        d.tag = tag;
        for (auto& r : turns) {
            if (r.text.empty())
                throw std::runtime_error("empty utterance in conversation " + id);
            d.turns.push_back({r.speaker, r.text, r.fine_emotion});
        }
        if (d.turns.size() < 2)
            throw std::runtime_error("conversation " + id + " has fewer than 2 turns");
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<MappedDialogue> expand_dialogues(const std::vector<RawDialogue>& dialogues) {
    std::vector<MappedDialogue> out;
    for (const auto& d : dialogues) {
        std::string dialogue_label;
        for (const auto& t : d.turns)
            if (!t.fine_emotion.empty()) {
                dialogue_label = t.fine_emotion;
                break;
            }
        for (size_t i = 1; i < d.turns.size(); i += 2) {
            const RawTurn& cur = d.turns[i - 1];
            const RawTurn& reply = d.turns[i];
            std::string fine = d.tag == DatasetTag::DD && !cur.fine_emotion.empty()
                                   ? cur.fine_emotion
                                   : dialogue_label;
            if (fine.empty())
                throw std::runtime_error("conversation " + d.id + " has no emotion label");
            MappedDialogue m;
            for (size_t h = 0; h + 1 < i; ++h) m.context_turns.push_back(tokenize(d.turns[h].text));
            m.current_turn = tokenize(cur.text);
            m.response = tokenize(reply.text);
            m.emotion = map_emotion(fine, d.tag);
            m.sentiment = sentiment_of(m.emotion, d.tag);
            out.push_back(std::move(m));
        }
    }
    return out;
}

void write_mapped_jsonl(const std::string& path, const std::vector<MappedDialogue>& examples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    for (const auto& e : examples) {
        ordered_json j;
        j["context"] = ordered_json::array();
        for (const auto& turn : e.context_turns) j["context"].push_back(join_tokens(turn));
        j["current"] = join_tokens(e.current_turn);
        j["response"] = join_tokens(e.response);
        j["emotion"] = e.emotion.name;
        j["emotion_index"] = e.emotion.index;
        j["sentiment"] = e.sentiment.name;
        j["sentiment_index"] = e.sentiment.index;
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<MappedDialogue> read_mapped_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mapped corpus: " + path);
    std::vector<MappedDialogue> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        MappedDialogue m;
        for (const auto& turn : j.at("context"))
            m.context_turns.push_back(tokenize(turn.get<std::string>()));
        m.current_turn = tokenize(j.at("current").get<std::string>());
        m.response = tokenize(j.at("response").get<std::string>());
        m.emotion = {j.at("emotion").get<std::string>(), j.at("emotion_index").get<int>()};
        m.sentiment = {j.at("sentiment").get<std::string>(), j.at("sentiment_index").get<int>()};
        out.push_back(std::move(m));
    }
    if (out.empty()) throw std::runtime_error("mapped corpus is empty: " + path);
    return out;
}

std::vector<std::vector<std::string>> all_token_sequences(
    const std::vector<MappedDialogue>& examples) {
    std::vector<std::vector<std::string>> seqs;
    for (const auto& e : examples) {
        for (const auto& t : e.context_turns) seqs.push_back(t);
        seqs.push_back(e.current_turn);
        seqs.push_back(e.response);
    }
    return seqs;
}

std::vector<EncodedExample> encode_examples(const std::vector<MappedDialogue>& examples,
                                            const Vocabulary& vocab) {
    std::vector<EncodedExample> out;
    out.reserve(examples.size());
    for (const auto& e : examples) {
        EncodedExample x;
        for (const auto& t : e.context_turns) x.context_turns.push_back(vocab.encode(t));
        x.current_turn = vocab.encode(e.current_turn);
        x.response = vocab.encode(e.response);
        x.emotion = e.emotion.index;
        x.sentiment = e.sentiment.index;
        out.push_back(std::move(x));
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<EncodedExample>& examples, int batch_size,
                                int max_len, BatchStats* stats) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    struct Row {
        std::vector<int> context;
        int cur_begin = 0, cur_end = 0;
        std::vector<int> response;
        int sentiment = 0, emotion = 0;
    };
    std::vector<Row> rows;
    rows.reserve(examples.size());
    for (const auto& e : examples) {
        Row r;
        std::vector<int> history;
        for (const auto& t : e.context_turns) history.insert(history.end(), t.begin(), t.end());
        std::vector<int> current = e.current_turn;
        if ((int)current.size() > max_len) {
            current.resize((size_t)max_len);
            if (stats) ++stats->truncated_contexts;
        }
        int budget = max_len - (int)current.size();
        if ((int)history.size() > budget) {
            history.erase(history.begin(), history.end() - budget);
            if (stats) ++stats->truncated_contexts;
        }
        r.context = history;
        r.cur_begin = (int)r.context.size();
        r.context.insert(r.context.end(), current.begin(), current.end());
        r.cur_end = (int)r.context.size();
        if (r.context.empty()) throw std::invalid_argument("example with empty current turn");

        std::vector<int> resp = e.response;
        if ((int)resp.size() > max_len) {
            resp.resize((size_t)max_len);
            if (stats) ++stats->truncated_responses;
        }
        r.response.push_back(Vocabulary::kSos);
        r.response.insert(r.response.end(), resp.begin(), resp.end());
        r.response.push_back(Vocabulary::kEos);
        r.sentiment = e.sentiment;
        r.emotion = e.emotion;
        rows.push_back(std::move(r));
    }

    std::vector<Batch> out;
    for (size_t at = 0; at < rows.size(); at += (size_t)batch_size) {
        size_t end = std::min(rows.size(), at + (size_t)batch_size);
        Batch b;
        b.size = (int)(end - at);
        for (size_t i = at; i < end; ++i) {
            b.context_len = std::max(b.context_len, (int)rows[i].context.size());
            b.response_len = std::max(b.response_len, (int)rows[i].response.size());
        }
        b.context_ids.assign((size_t)b.size * b.context_len, Vocabulary::kPad);
        b.context_mask.assign((size_t)b.size * b.context_len, 0.f);
        b.response_ids.assign((size_t)b.size * b.response_len, Vocabulary::kPad);
        b.response_mask.assign((size_t)b.size * b.response_len, 0.f);
        for (size_t i = at; i < end; ++i) {
            const Row& r = rows[i];
            size_t bi = i - at;
            for (size_t j = 0; j < r.context.size(); ++j) {
                b.context_ids[bi * (size_t)b.context_len + j] = r.context[j];
                b.context_mask[bi * (size_t)b.context_len + j] = 1.f;
            }
            for (size_t j = 0; j < r.response.size(); ++j) {
                b.response_ids[bi * (size_t)b.response_len + j] = r.response[j];
                b.response_mask[bi * (size_t)b.response_len + j] = 1.f;
            }
            b.boundary.push_back({r.cur_begin, r.cur_end});
            b.sentiment_targets.push_back(r.sentiment);
            b.emotion_targets.push_back(r.emotion);
        }
        out.push_back(std::move(b));
    }
    return out;
}

CorpusSplits split_dialogues(std::vector<MappedDialogue> examples, uint64_t seed) {
    Rng rng(substream_seed(seed, "split"));
    rng.shuffle(examples);
    size_t n = examples.size();
    size_t n_train = (size_t)((double)n * 0.8);
    size_t n_valid = (size_t)((double)n * 0.1);
    CorpusSplits s;
    s.train.assign(examples.begin(), examples.begin() + (long)n_train);
    s.valid.assign(examples.begin() + (long)n_train, examples.begin() + (long)(n_train + n_valid));
    s.test.assign(examples.begin() + (long)(n_train + n_valid), examples.end());
    return s;
}

}  // namespace asem
