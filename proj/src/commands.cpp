#include "asem/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "asem/checkpoint.hpp"
#include "asem/corpus.hpp"
#include "asem/decode.hpp"
#include "asem/embeddings.hpp"
#include "asem/evaluate.hpp"
#include "asem/metrics.hpp"
#include "asem/text.hpp"
#include "asem/train.hpp"

namespace asem {

namespace {

using ordered_json = nlohmann::ordered_json;

struct LoadedCorpus {
    std::vector<MappedDialogue> train, valid, test;
};

// Mapped files when given; otherwise split the raw dump. A missing validation
// set is carved out of train with the seeded splitter.
LoadedCorpus load_corpus(const RunConfig& cfg, std::ostream& out) {
    LoadedCorpus c;
    if (!cfg.paths.train_corpus.empty()) {
        c.train = read_mapped_jsonl(cfg.paths.train_corpus);
        if (!cfg.paths.valid_corpus.empty()) c.valid = read_mapped_jsonl(cfg.paths.valid_corpus);
        if (!cfg.paths.test_corpus.empty()) c.test = read_mapped_jsonl(cfg.paths.test_corpus);
        if (c.valid.empty()) {
            CorpusSplits s =
                split_dialogues(std::move(c.train), substream_seed(cfg.train.seed, "split"));
            c.train = std::move(s.train);
            c.valid = std::move(s.valid);
            if (c.test.empty()) c.test = std::move(s.test);
            out << "no validation corpus given; split train 80/10/10\n";
        }
    } else if (!cfg.paths.raw.empty()) {
        std::vector<MappedDialogue> all =
            expand_dialogues(read_raw(cfg.paths.raw, cfg.dataset_tag));
        CorpusSplits s = split_dialogues(std::move(all), substream_seed(cfg.train.seed, "split"));
        c.train = std::move(s.train);
        c.valid = std::move(s.valid);
        c.test = std::move(s.test);
        out << "split " << cfg.paths.raw << " 80/10/10\n";
    } else {
        throw std::runtime_error("config needs paths.train_corpus or paths.raw");
    }
    if (c.train.empty()) throw std::runtime_error("training corpus is empty");
    return c;
}

EmbeddingTable make_embeddings(const RunConfig& cfg, const Vocabulary& vocab, std::ostream& out) {
    uint64_t seed = substream_seed(cfg.train.seed, "embeddings");
    if (cfg.paths.embeddings == "none") {
        out << "embeddings: seeded random (" << cfg.model.embed_dim << "d)\n";
        return random_embeddings(vocab, cfg.model.embed_dim, seed);
    }
    out << "embeddings: " << cfg.paths.embeddings << "\n";
    return load_embeddings(cfg.paths.embeddings, vocab, cfg.model.embed_dim, seed);
}

ModelConfig sized_model(const RunConfig& cfg, const Vocabulary& vocab) {
    ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    mc.n_emotions = emotion_count(cfg.dataset_tag);
    mc.n_sentiments = sentiment_count(cfg.dataset_tag);
    return mc;
}

EvalOptions eval_options(const std::vector<std::string>& emotions, int batch_size,
                         const DecodeConfig& decode) {
    EvalOptions opts;
    opts.batch_size = batch_size;
    opts.decode = decode;
    for (size_t i = 0; i < emotions.size(); ++i)
        if (emotions[i] == "no_emotion") opts.exclude_emotions.insert((int)i);
    return opts;
}

EmbeddingTable model_embeddings(const Checkpoint& ckpt) {
    EmbeddingTable t;
    t.matrix = ckpt.params.at("embedding");
    t.dim = ckpt.model.embed_dim;
    return t;
}

void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << body;
    if (!f) throw std::runtime_error("write failed: " + path);
}

void print_metric_row(std::ostream& out, const std::string& label, const MetricReport& r) {
    out << std::left << std::setw(20) << label << std::right << std::fixed
        << std::setprecision(4) << std::setw(10) << r.ppl << std::setw(9) << r.bleu
        << std::setw(9) << r.distinct_1 << std::setw(9) << r.distinct_2 << std::setw(9)
        << r.avg_cosine << std::setw(9) << r.macro_f1 << "\n";
    out.unsetf(std::ios::fixed);
    out << std::setprecision(6);
}

struct Reply {
    std::string text;
    std::vector<int> token_ids;
    std::string sentiment;
    std::string emotion;
    std::vector<std::pair<std::string, float>> top_emotions;
};

Reply respond(const Checkpoint& ckpt, const Vocabulary& vocab,
              const std::vector<std::vector<int>>& history, const std::vector<int>& current,
              const DecodeConfig& dc) {
    EncodedExample ex;
    ex.context_turns = history;
    ex.current_turn = current;
    ex.sentiment = 0;  // placeholder targets; only the trace is read
    ex.emotion = 0;
    std::vector<Batch> batches = make_batches({ex}, 1, ckpt.model.max_len);
    const Batch& batch = batches.front();

    ModelForward<float> fwd(ckpt.model, ckpt.params, /*with_grads=*/false);
    fwd.run(batch);
    ForwardTrace<float> tr = fwd.trace();

    Reply r;
    const float* sent = tr.s_att_pooled.ptr();
    int best_s = 0;
    for (int k = 1; k < ckpt.model.n_sentiments; ++k)
        if (sent[k] > sent[best_s]) best_s = k;
    r.sentiment = ckpt.sentiment_names[(size_t)best_s];

    const float* emo = tr.e_att.ptr();
    std::vector<std::pair<float, int>> ranked;
    for (int m = 0; m < ckpt.model.n_emotions; ++m) ranked.push_back({emo[m], m});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    r.emotion = ckpt.emotion_names[(size_t)ranked[0].second];
    for (size_t i = 0; i < ranked.size() && i < 3; ++i)
        r.top_emotions.push_back({ckpt.emotion_names[(size_t)ranked[i].second], ranked[i].first});

    ModelScorer scorer(ckpt.model, ckpt.params, encode_context(ckpt.model, ckpt.params, batch));
    std::vector<DecodeResult> beams = beam_search(scorer, Vocabulary::kSos, Vocabulary::kEos,
                                                  dc.beam_width, dc.max_new_tokens,
                                                  dc.length_penalty);
    if (beams.empty()) throw std::runtime_error("beam search returned no candidates");
    r.token_ids = beams[0].tokens;
    r.text = join_tokens(vocab.decode(r.token_ids));
    return r;
}

void print_reply(std::ostream& out, const Reply& r) {
    out << "[sentiment " << r.sentiment << "] [emotion " << r.emotion << " |";
    for (const auto& [name, p] : r.top_emotions)
        out << " " << name << " " << std::fixed << std::setprecision(3) << p;
    out.unsetf(std::ios::fixed);
    out << std::setprecision(6) << "]\n";
    out << (r.text.empty() ? "(empty response)" : r.text) << "\n";
}

}  // namespace

int cmd_prep(const PrepArgs& args, std::ostream& out) {
    DatasetTag tag = parse_dataset_tag(args.dataset);
    std::vector<RawDialogue> raw = read_raw(args.raw, tag);

    std::set<std::string> unknown;
    for (const RawDialogue& d : raw)
        for (const RawTurn& t : d.turns)
            if (!t.fine_emotion.empty()) {
                try {
                    map_emotion(t.fine_emotion, tag);
                } catch (const std::exception&) {
                    unknown.insert(t.fine_emotion);
                }
            }
    if (!unknown.empty()) {
        std::string msg = "unknown emotion labels:";
        for (const std::string& u : unknown) msg += " '" + u + "'";
        throw std::runtime_error(msg + "; nothing written");
    }

    std::vector<MappedDialogue> examples = expand_dialogues(raw);
    if (examples.empty()) throw std::runtime_error("no usable examples in " + args.raw);
    write_mapped_jsonl(args.out, examples);

    const std::vector<std::string>& names = emotion_names(tag);
    std::vector<long long> counts(names.size(), 0);
    for (const MappedDialogue& ex : examples) ++counts[(size_t)ex.emotion.index];
    out << "dialogues: " << raw.size() << "\nexamples: " << examples.size() << "\n";
    for (size_t i = 0; i < names.size(); ++i) out << names[i] << "\t" << counts[i] << "\n";
    out << "wrote " << args.out << "\n";
    return 0;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
    RunConfig cfg = load_run_config(args.config);
    if (args.has_seed) cfg.train.seed = args.seed;
    if (!args.out.empty()) cfg.paths.checkpoint = args.out;
    if (cfg.paths.checkpoint.empty())
        throw std::runtime_error("config needs paths.checkpoint (or pass --out)");
    cfg.validate();

    LoadedCorpus corpus = load_corpus(cfg, out);

    Checkpoint state;
    Vocabulary vocab;
    bool resumed = false;
    std::string resume_path;
    if (std::filesystem::exists(cfg.paths.checkpoint + ".last"))
        resume_path = cfg.paths.checkpoint + ".last";
    else if (std::filesystem::exists(cfg.paths.checkpoint))
        resume_path = cfg.paths.checkpoint;
    if (!resume_path.empty()) {
        state = load_checkpoint(resume_path);
        vocab = Vocabulary::from_tokens(state.vocab_tokens);
        state.train = cfg.train;  // the new budget and schedule apply
        resumed = true;
        out << "resuming " << resume_path << " at step " << state.step << "\n";
    } else {
        vocab = Vocabulary::build(all_token_sequences(corpus.train), cfg.min_freq);
        EmbeddingTable emb = make_embeddings(cfg, vocab, out);
        state = init_checkpoint(sized_model(cfg, vocab), cfg.train, cfg.dataset_tag, vocab,
                                emotion_names(cfg.dataset_tag), sentiment_names(cfg.dataset_tag),
                                &emb.matrix);
    }

    std::vector<EncodedExample> train_ex = encode_examples(corpus.train, vocab);
    std::vector<EncodedExample> valid_ex = encode_examples(corpus.valid, vocab);
    out << "vocab " << vocab.size() << ", train " << train_ex.size() << ", valid "
        << valid_ex.size() << ", params " << state.params.param_count() << "\n";

    std::ofstream log_file;
    std::ostream* log = nullptr;
    if (!cfg.paths.log.empty()) {
        log_file.open(cfg.paths.log, resumed ? std::ios::app : std::ios::trunc);
        if (!log_file) throw std::runtime_error("cannot write log: " + cfg.paths.log);
        log = &log_file;
    }

    TrainOutcome res = train_loop(std::move(state), train_ex, valid_ex, log);
    if (!resumed || res.improved) save_checkpoint(cfg.paths.checkpoint, res.best);
    save_checkpoint(cfg.paths.checkpoint + ".last", res.last);
    out << "stopped at step " << res.last.step;
    if (!res.last.val_history.empty()) out << ", best validation " << res.last.best_val;
    out << "\nwrote " << cfg.paths.checkpoint << " and " << cfg.paths.checkpoint << ".last\n";
    return 0;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint);
    Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
    std::vector<MappedDialogue> mapped = read_mapped_jsonl(args.corpus);
    std::vector<EncodedExample> examples = encode_examples(mapped, vocab);

    MetricReport report =
        evaluate_model(ckpt.model, ckpt.params, examples, vocab, model_embeddings(ckpt),
                       eval_options(ckpt.emotion_names, args.batch_size, args.decode));
    std::string json = metric_report_json(report);
    if (!args.out.empty()) {
        write_text_file(args.out, json + "\n");
        out << "wrote " << args.out << "\n";
    }
    out << json << "\n";
    return 0;
}

int cmd_ablate(const AblateArgs& args, std::ostream& out) {
    RunConfig cfg = load_run_config(args.config);
    if (args.has_seed) cfg.train.seed = args.seed;
    cfg.validate();
    std::vector<std::string> names = args.names.empty() ? ablation_names() : args.names;
    for (const std::string& name : names) {
        ModelConfig scratch = cfg.model;
        apply_ablation(name, scratch);  // reject unknown names before any work
    }

    LoadedCorpus corpus = load_corpus(cfg, out);
    Vocabulary vocab = Vocabulary::build(all_token_sequences(corpus.train), cfg.min_freq);
    EmbeddingTable emb = make_embeddings(cfg, vocab, out);
    std::vector<EncodedExample> train_ex = encode_examples(corpus.train, vocab);
    std::vector<EncodedExample> valid_ex = encode_examples(corpus.valid, vocab);
    const std::vector<MappedDialogue>& held_out = corpus.test.empty() ? corpus.valid : corpus.test;
    std::vector<EncodedExample> test_ex = encode_examples(held_out, vocab);
    out << "vocab " << vocab.size() << ", train " << train_ex.size() << ", eval on "
        << test_ex.size() << " examples\n";

    auto run_variant = [&](const ModelConfig& mc) {
        Checkpoint st = init_checkpoint(mc, cfg.train, cfg.dataset_tag, vocab,
                                        emotion_names(cfg.dataset_tag),
                                        sentiment_names(cfg.dataset_tag), &emb.matrix);
        TrainOutcome res = train_loop(std::move(st), train_ex, valid_ex, nullptr);
        EmbeddingTable trained = model_embeddings(res.best);
        return evaluate_model(res.best.model, res.best.params, test_ex, vocab, trained,
                              eval_options(res.best.emotion_names, cfg.train.batch_size,
                                           cfg.decode));
    };

    out << std::left << std::setw(20) << "variant" << std::right << std::setw(10) << "ppl"
        << std::setw(9) << "bleu" << std::setw(9) << "dist1" << std::setw(9) << "dist2"
        << std::setw(9) << "cosine" << std::setw(9) << "f1" << "\n";
    ordered_json combined;
    MetricReport base = run_variant(sized_model(cfg, vocab));
    print_metric_row(out, "full", base);
    combined["full"] = ordered_json::parse(metric_report_json(base));
    for (const std::string& name : names) {
        RunConfig variant_cfg = cfg;
        apply_ablation(name, variant_cfg.model);
        MetricReport r = run_variant(sized_model(variant_cfg, vocab));
        print_metric_row(out, name, r);
        combined[name] = ordered_json::parse(metric_report_json(r));
    }

    std::string report_path = !args.out.empty() ? args.out : cfg.paths.report;
    if (!report_path.empty()) {
        write_text_file(report_path, combined.dump(2) + "\n");
        out << "wrote " << report_path << "\n";
    }
    return 0;
}

int cmd_generate(const GenerateArgs& args, std::ostream& out) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint);
    Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
    std::vector<int> current = vocab.encode(tokenize(args.text));
    if (current.empty()) throw std::runtime_error("input text has no tokens");
    Reply r = respond(ckpt, vocab, {}, current, args.decode);
    print_reply(out, r);
    return 0;
}

int cmd_chat(const ChatArgs& args, std::istream& in, std::ostream& out) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint);
    Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
    std::vector<std::vector<int>> history;
    out << "loaded " << args.checkpoint << " (step " << ckpt.step
        << "); /reset clears context, /quit exits\n";
    std::string line;
    while (true) {
        out << "> " << std::flush;
        if (!std::getline(in, line)) {
            out << "\n";
            return 0;
        }
        std::string text = trim(line);
        if (text == "/quit") return 0;
        if (text == "/reset") {
            history.clear();
            out << "(context cleared)\n";
            continue;
        }
        if (text.empty()) continue;
        std::vector<int> current = vocab.encode(tokenize(text));
        if (current.empty()) continue;
        try {
            Reply r = respond(ckpt, vocab, history, current, args.decode);
            print_reply(out, r);
            history.push_back(current);
            history.push_back(r.token_ids);
        } catch (const std::exception& e) {
            out << "(no response: " << e.what() << ")\n";
        }
    }
}

}  // namespace asem
