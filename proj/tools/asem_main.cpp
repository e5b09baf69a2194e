#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "asem/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"empathetic dialogue model: data prep, training, evaluation, chat"};
    app.require_subcommand(1);

    asem::PrepArgs prep;
    CLI::App* prep_cmd = app.add_subcommand("prep", "convert a raw dialogue dump to mapped jsonl");
    prep_cmd->add_option("--raw", prep.raw, "raw dataset (.tsv or .jsonl)")->required();
    prep_cmd->add_option("--out", prep.out, "mapped corpus output path")->required();
    prep_cmd->add_option("--dataset", prep.dataset, "ed or dd (default ed)");

    asem::TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a config file");
    train_cmd->add_option("--config", train.config, "run config json")->required();
    CLI::Option* train_seed = train_cmd->add_option("--seed", train.seed, "override config seed");
    train_cmd->add_option("--out", train.out, "override checkpoint path");

    asem::EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a mapped corpus");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--corpus", eval.corpus, "mapped corpus to score")->required();
    eval_cmd->add_option("--out", eval.out, "metric report output path");
    eval_cmd->add_option("--batch-size", eval.batch_size, "evaluation batch size");
    eval_cmd->add_option("--beam-width", eval.decode.beam_width, "beam width for generation");
    eval_cmd->add_option("--max-new-tokens", eval.decode.max_new_tokens, "generation cap");
    eval_cmd->add_option("--length-penalty", eval.decode.length_penalty, "beam length penalty");

    asem::AblateArgs ablate;
    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "train and score single-flag model variants side by side");
    ablate_cmd->add_option("--config", ablate.config, "run config json")->required();
    ablate_cmd->add_option("--name", ablate.names,
                           "ablation to run (repeatable; default: all of them)");
    CLI::Option* ablate_seed = ablate_cmd->add_option("--seed", ablate.seed, "override config seed");
    ablate_cmd->add_option("--out", ablate.out, "comparative report output path");

    asem::GenerateArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("generate", "one response for a given statement");
    gen_cmd->add_option("--checkpoint", gen.checkpoint, "checkpoint file")->required();
    gen_cmd->add_option("--text", gen.text, "the statement to respond to")->required();
    gen_cmd->add_option("--beam-width", gen.decode.beam_width, "beam width");
    gen_cmd->add_option("--max-new-tokens", gen.decode.max_new_tokens, "generation cap");
    gen_cmd->add_option("--length-penalty", gen.decode.length_penalty, "beam length penalty");

    asem::ChatArgs chat;
    CLI::App* chat_cmd = app.add_subcommand("chat", "interactive terminal session");
    chat_cmd->add_option("--checkpoint", chat.checkpoint, "checkpoint file")->required();
    chat_cmd->add_option("--beam-width", chat.decode.beam_width, "beam width");
    chat_cmd->add_option("--max-new-tokens", chat.decode.max_new_tokens, "generation cap");
    chat_cmd->add_option("--length-penalty", chat.decode.length_penalty, "beam length penalty");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep_cmd->parsed()) return asem::cmd_prep(prep, std::cout);
        if (train_cmd->parsed()) {
            train.has_seed = train_seed->count() > 0;
            return asem::cmd_train(train, std::cout);
        }
        if (eval_cmd->parsed()) return asem::cmd_eval(eval, std::cout);
        if (ablate_cmd->parsed()) {
            ablate.has_seed = ablate_seed->count() > 0;
            return asem::cmd_ablate(ablate, std::cout);
        }
        if (gen_cmd->parsed()) return asem::cmd_generate(gen, std::cout);
        if (chat_cmd->parsed()) return asem::cmd_chat(chat, std::cin, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
