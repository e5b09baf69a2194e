#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "asem/config.hpp"

namespace asem {

struct PrepArgs {
    std::string raw;
    std::string out;
    std::string dataset = "ed";
};

struct TrainArgs {
    std::string config;
    bool has_seed = false;
    uint64_t seed = 0;
    std::string out;  // checkpoint path override
};

struct EvalArgs {
    std::string checkpoint;
    std::string corpus;
    std::string out;  // report path; stdout only when empty
    int batch_size = 16;
    DecodeConfig decode;
};

struct AblateArgs {
    std::string config;
    std::vector<std::string> names;  // empty selects every known ablation
    bool has_seed = false;
    uint64_t seed = 0;
    std::string out;  // comparative report path
};

struct GenerateArgs {
    std::string checkpoint;
    std::string text;
    DecodeConfig decode;
};

struct ChatArgs {
    std::string checkpoint;
    DecodeConfig decode;
};

// All commands throw on failure and return 0 on success. They validate
// their inputs fully before writing anything.
int cmd_prep(const PrepArgs& args, std::ostream& out);
int cmd_train(const TrainArgs& args, std::ostream& out);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_ablate(const AblateArgs& args, std::ostream& out);
int cmd_generate(const GenerateArgs& args, std::ostream& out);
int cmd_chat(const ChatArgs& args, std::istream& in, std::ostream& out);

}  // namespace asem
