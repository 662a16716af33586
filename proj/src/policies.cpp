#include "policies.hpp"

#include "diffusion.hpp"

namespace glma {

const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::text_to_image: return "text_to_image";
        case TaskKind::edit_default: return "edit_default";
        case TaskKind::edit_layout: return "edit_layout";
        case TaskKind::edit_color_texture: return "edit_color_texture";
        case TaskKind::storytelling: return "storytelling";
    }
    fail(ErrorKind::internal, "unreachable task kind");
}

TaskKind parse_task(const std::string& s) {
    if (s == "text_to_image" || s == "t2i") return TaskKind::text_to_image;
    if (s == "edit_default" || s == "edit") return TaskKind::edit_default;
    if (s == "edit_layout" || s == "layout") return TaskKind::edit_layout;
    if (s == "edit_color_texture" || s == "color_texture")
        return TaskKind::edit_color_texture;
    if (s == "storytelling" || s == "story") return TaskKind::storytelling;
    fail(ErrorKind::parse, "unknown task '" + s + "'");
}

double epsilon_for_task(TaskKind task, const RunConfig& cfg) {
    switch (task) {
        case TaskKind::text_to_image: return cfg.eps_text_to_image;
        case TaskKind::edit_default: return cfg.eps_edit_default;
        case TaskKind::edit_layout: return cfg.eps_edit_layout;
        case TaskKind::edit_color_texture: return cfg.eps_edit_color_texture;
        case TaskKind::storytelling: return cfg.eps_storytelling;
    }
    fail(ErrorKind::internal, "unreachable task kind");
}

double resolve_epsilon(TaskKind task, const RunConfig& cfg,
                       const std::optional<double>& flag) {
    double eps = flag ? *flag : epsilon_for_task(task, cfg);
    if (!(eps >= 0.0 && eps <= 1.0))
        fail(ErrorKind::input, "epsilon must lie in [0, 1], got " + std::to_string(eps));
    return eps;
}

LayerChoice select_layers(TaskKind, int n_layers) {
    if (n_layers < 1)
        fail(ErrorKind::input, "layer selection needs at least 1 LM layer");
    return LayerChoice{0, n_layers};
}

std::vector<size_t> storytelling_triggers(const std::string& text) {
    std::vector<size_t> out;
    for (size_t i = 0; i < text.size(); ++i)
        if (text[i] == '.' && (i + 1 == text.size() || text[i + 1] != '.'))
            out.push_back(i);
    return out;
}

namespace {

std::string bytes_to_text(const std::vector<int>& ids) {
    std::string s;
    s.reserve(ids.size());
    for (int id : ids) s.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    return s;
}

// Window over the trailing `count` bytes of `text` ending at `end` exclusive.
TokenSequence tail_window(const std::string& text, size_t end, int length, int max_occupied) {
    size_t count = std::min<size_t>(end, static_cast<size_t>(max_occupied));
    return tokenize(text.substr(end - count, count), length);
}

} // namespace

RoundState run_round(const Backbones& nets, const RunConfig& cfg,
                     const ConversationTurn& turn, int max_new) {
    RoundState r;
    r.prompt = turn.text;
    if (turn.image) r.f_image = nets.encode_vision(*turn.image);
    TokenSequence window = tokenize(r.prompt, cfg.profile.length);
    MllmResult res = nets.mllm_forward(window, r.f_image, max_new);
    r.response = bytes_to_text(res.generated);
    r.stack = std::move(res.stack);
    return r;
}

std::string story_decode(const Backbones& nets, const RunConfig& cfg,
                         const std::string& prompt, const std::optional<Matrix>& f_image,
                         int max_new) {
    std::string transcript = prompt;
    for (int i = 0; i < max_new; ++i) {
        TokenSequence window =
            tail_window(transcript, transcript.size(), cfg.profile.length,
                        cfg.profile.length - 1);
        MllmResult res = nets.mllm_forward(window, f_image, 1);
        if (res.generated.empty()) break;
        transcript.push_back(static_cast<char>(static_cast<unsigned char>(res.generated[0])));
    }
    return transcript.substr(prompt.size());
}

ExtractResult extract_for_task(TaskKind task, const std::vector<RoundState>& rounds,
                               const Backbones& nets, const RunConfig& cfg) {
    if (rounds.empty())
        fail(ErrorKind::sequence, "extraction requires at least one completed LM round");
    ExtractResult out;
    switch (task) {
        case TaskKind::text_to_image:
            out.stacks.push_back(rounds.front().stack);
            out.transcript = rounds.front().transcript();
            return out;
        case TaskKind::edit_default:
        case TaskKind::edit_layout:
        case TaskKind::edit_color_texture:
            out.stacks.push_back(rounds.back().stack);
            out.transcript = rounds.back().transcript();
            return out;
        case TaskKind::storytelling: {
            const RoundState& last = rounds.back();
            out.transcript = last.transcript();
            out.triggers = storytelling_triggers(out.transcript);
            for (size_t p : out.triggers) {
                // Decoding state right after emitting the sentence-ending '.'.
                TokenSequence window =
                    tail_window(out.transcript, p + 1, cfg.profile.length,
                                cfg.profile.length);
                out.stacks.push_back(nets.forward_hidden(window, last.f_image));
            }
            return out;
        }
    }
    fail(ErrorKind::internal, "unreachable task kind");
}

InterleaveResult interleave_generate(const std::vector<ConversationTurn>& conversation,
                                     TaskKind task, const RunConfig& cfg,
                                     const Backbones& nets, const AdapterParams& adapter,
                                     const InterleaveOptions& opts) {
    if (conversation.empty())
        fail(ErrorKind::sequence, "interleaved generation requires at least one turn");

    std::vector<RoundState> rounds;
    rounds.reserve(conversation.size());
    for (size_t i = 0; i < conversation.size(); ++i) {
        const ConversationTurn& turn = conversation[i];
        bool story_tail = task == TaskKind::storytelling && i + 1 == conversation.size();
        if (!story_tail) {
            rounds.push_back(run_round(nets, cfg, turn, cfg.max_new));
            continue;
        }
        RoundState r;
        r.prompt = turn.text;
        if (turn.image) r.f_image = nets.encode_vision(*turn.image);
        r.response = story_decode(nets, cfg, r.prompt, r.f_image, cfg.story_max_new);
        if (opts.max_sentences > 0) {
            // Budget: cut the transcript at the k-th sentence end so the
            // emitted text and the image count always agree.
            std::string tr = r.transcript();
            std::vector<size_t> trig = storytelling_triggers(tr);
            if (static_cast<int>(trig.size()) > opts.max_sentences) {
                size_t cut = trig[static_cast<size_t>(opts.max_sentences) - 1] + 1;
                if (cut < r.prompt.size())
                    fail(ErrorKind::input,
                         "max-sentences budget falls inside the prompt itself");
                r.response = tr.substr(r.prompt.size(), cut - r.prompt.size());
            }
        }
        TokenSequence window = tail_window(r.transcript(), r.transcript().size(),
                                           cfg.profile.length, cfg.profile.length);
        r.stack = nets.forward_hidden(window, r.f_image);
        rounds.push_back(std::move(r));
    }

    ExtractResult ext = extract_for_task(task, rounds, nets, cfg);

    InterleaveResult res;
    res.epsilon = resolve_epsilon(task, cfg, opts.epsilon);
    res.layers = select_layers(task, nets.prof.n_layers);
    res.transcript = ext.transcript;

    NoiseSchedule sched =
        build_schedule(cfg.profile.timesteps, cfg.beta_start, cfg.beta_end);
    int steps = cfg.resolved_sample_steps();

    auto render = [&](const HiddenStack& stack, int index) {
        AlignedEmbeddings emb_base = adapter_apply(
            adapter, stack.layer(res.layers.base_layer), res.layers.base_layer);
        AlignedEmbeddings emb_ref = adapter_apply(
            adapter, stack.layer(res.layers.refiner_layer), res.layers.refiner_layer);
        RngStream rng(cfg.seed, "sample/" + std::to_string(index));
        Matrix latent =
            sample_latent(nets, sched, emb_base, emb_ref, res.epsilon, steps, rng);
        return nets.vae_decode(latent);
    };

    if (task == TaskKind::storytelling) {
        size_t prev = 0;
        for (size_t k = 0; k < ext.triggers.size(); ++k) {
            size_t p = ext.triggers[k];
            GenerationEvent text_ev;
            text_ev.kind = GenerationEvent::Kind::text_segment;
            text_ev.text = ext.transcript.substr(prev, p + 1 - prev);
            res.events.push_back(std::move(text_ev));

            GenerationEvent img_ev;
            img_ev.kind = GenerationEvent::Kind::image;
            img_ev.image = render(ext.stacks[k], static_cast<int>(k));
            img_ev.trigger_pos = p;
            res.events.push_back(std::move(img_ev));
            prev = p + 1;
        }
        if (prev < ext.transcript.size()) {
            GenerationEvent tail;
            tail.kind = GenerationEvent::Kind::text_segment;
            tail.text = ext.transcript.substr(prev);
            res.events.push_back(std::move(tail));
        }
        res.n_images = static_cast<int>(ext.triggers.size());
        return res;
    }

    // Single image conditioned on the extraction round, emitted right after
    // that round's text; remaining rounds keep their text order.
    size_t source_round = task == TaskKind::text_to_image ? 0 : rounds.size() - 1;
    for (size_t i = 0; i < rounds.size(); ++i) {
        GenerationEvent text_ev;
        text_ev.kind = GenerationEvent::Kind::text_segment;
        text_ev.text = rounds[i].transcript();
        res.events.push_back(std::move(text_ev));
        if (i == source_round) {
            GenerationEvent img_ev;
            img_ev.kind = GenerationEvent::Kind::image;
            img_ev.image = render(ext.stacks[0], 0);
            img_ev.trigger_pos = ext.transcript.size();
            res.events.push_back(std::move(img_ev));
        }
    }
    res.n_images = 1;
    return res;
}

} // namespace glma
