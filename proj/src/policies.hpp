#pragma once

#include "adapter.hpp"
#include "backbones.hpp"
#include "config.hpp"
#include "image.hpp"

#include <optional>
#include <string>
#include <vector>

namespace glma {

// Closed set of chat tasks; each maps to exactly one fusion-gate default.
enum class TaskKind { text_to_image, edit_default, edit_layout, edit_color_texture,
                      storytelling };

const char* task_name(TaskKind t);
TaskKind parse_task(const std::string& s);

// Gate defaults come from the config (which ships the recipe values); an
// explicit CLI value wins over both. Precedence: flag > config > default.
double epsilon_for_task(TaskKind task, const RunConfig& cfg);
double resolve_epsilon(TaskKind task, const RunConfig& cfg,
                       const std::optional<double>& flag);

// Which hidden layers condition the two denoisers: the embedding layer for
// the coarse base path and the deepest layer for the refiner, for every task.
// The layer-sweep probe overrides the refiner side explicitly.
struct LayerChoice {
    int base_layer = 0;
    int refiner_layer = 0;
};

LayerChoice select_layers(TaskKind task, int n_layers);

// Byte offsets of sentence ends: the index of the last '.' in each maximal
// run of consecutive periods. Strictly increasing; "..." yields one trigger.
std::vector<size_t> storytelling_triggers(const std::string& text);

// One user turn of a conversation.
struct ConversationTurn {
    std::string text;
    std::optional<Image> image;
};

// One completed LM round: the text that went in, the greedy continuation,
// and the hidden stack of the final forward pass of the round.
struct RoundState {
    std::string prompt;
    std::string response;
    std::optional<Matrix> f_image;
    HiddenStack stack;

    std::string transcript() const { return prompt + response; }
};

RoundState run_round(const Backbones& nets, const RunConfig& cfg,
                     const ConversationTurn& turn, int max_new);

// Story continuation past the fixed context: every new byte is predicted
// from a window holding the last (length - 1) transcript bytes.
std::string story_decode(const Backbones& nets, const RunConfig& cfg,
                         const std::string& prompt, const std::optional<Matrix>& f_image,
                         int max_new);

// Hidden stacks feeding the adapter, one per image the task will emit.
// text_to_image reads round 1, edits read the final round, storytelling
// recomputes the decoding state at each trigger of the last round.
struct ExtractResult {
    std::vector<HiddenStack> stacks;
    std::vector<size_t> triggers; // storytelling only, offsets into transcript
    std::string transcript;      // text of the round the stacks came from
};

ExtractResult extract_for_task(TaskKind task, const std::vector<RoundState>& rounds,
                               const Backbones& nets, const RunConfig& cfg);

struct GenerationEvent {
    enum class Kind { text_segment, image };
    Kind kind = Kind::text_segment;
    std::string text;        // text_segment payload
    Image image;             // image payload
    size_t trigger_pos = 0;  // image events: char index in the round transcript
                             // (end-of-round images sit one past the text)
};

struct InterleaveOptions {
    std::optional<double> epsilon; // CLI override, wins over config
    int max_sentences = 0;         // storytelling budget; 0 = unlimited
};

struct InterleaveResult {
    std::vector<GenerationEvent> events;
    std::string transcript;
    double epsilon = 0.0;
    LayerChoice layers;
    int n_images = 0;
};

// Runs the LM rounds, extracts hidden state per task policy, applies the
// adapter, and samples one image per trigger (storytelling) or exactly one
// at end-of-round (other tasks). Image i draws from rng stream "sample/<i>".
// Deterministic under a fixed (config, seed).
InterleaveResult interleave_generate(const std::vector<ConversationTurn>& conversation,
                                     TaskKind task, const RunConfig& cfg,
                                     const Backbones& nets, const AdapterParams& adapter,
                                     const InterleaveOptions& opts = {});

} // namespace glma
