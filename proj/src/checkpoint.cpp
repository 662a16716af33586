#include "checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace glma {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'M', 'A', 'C', 'K', 'P', 'T'};

// Serialization happens through a growing byte buffer so the trailing
// checksum can cover every preceding byte exactly.
struct Writer {
    std::vector<unsigned char> buf;
    void bytes(const void* p, size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), c, c + n);
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
};

struct Reader {
    const unsigned char* p;
    size_t n;
    size_t off = 0;
    std::string path;

    void bytes(void* out, size_t k, const char* what) {
        if (off + k > n)
            fail(ErrorKind::format,
                 "checkpoint '" + path + "' is truncated (while reading " + what + ")");
        std::memcpy(out, p + off, k);
        off += k;
    }
    uint32_t u32(const char* what) {
        uint32_t v;
        bytes(&v, 4, what);
        return v;
    }
    uint64_t u64(const char* what) {
        uint64_t v;
        bytes(&v, 8, what);
        return v;
    }
    double f64(const char* what) {
        double v;
        bytes(&v, 8, what);
        return v;
    }
};

void write_profile(Writer& w, const ScaleProfile& p) {
    for (int v : {p.d_model, p.n_layers, p.length, p.seq_sd, p.d_sd, p.d_pool, p.lat_c,
                  p.lat_h, p.lat_w, p.timesteps, p.vocab, p.img_size})
        w.u32(static_cast<uint32_t>(v));
}

ScaleProfile read_profile(Reader& r) {
    ScaleProfile p;
    int* fields[] = {&p.d_model, &p.n_layers, &p.length, &p.seq_sd, &p.d_sd, &p.d_pool,
                     &p.lat_c, &p.lat_h, &p.lat_w, &p.timesteps, &p.vocab, &p.img_size};
    for (int* f : fields) *f = static_cast<int>(r.u32("profile dims"));
    return p;
}

void write_block(Writer& w, const std::string& name, const Matrix& m) {
    w.u32(static_cast<uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<uint32_t>(m.rows()));
    w.u32(static_cast<uint32_t>(m.cols()));
    w.bytes(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open checkpoint '" + path + "'");
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return data;
}

// Magic first (clear diagnosis for non-checkpoint files), then the trailing
// whole-file checksum: any corruption or truncation fails closed before
// field parsing.
void verify_container(const std::vector<unsigned char>& data, const std::string& path) {
    if (data.size() >= 8 && std::memcmp(data.data(), kMagic, 8) != 0)
        fail(ErrorKind::format, "checkpoint '" + path + "': bad magic, not a checkpoint file");
    if (data.size() < 8 + 4 + 8)
        fail(ErrorKind::format, "checkpoint '" + path + "' is truncated (no header)");
    uint64_t stored;
    std::memcpy(&stored, data.data() + data.size() - 8, 8);
    uint64_t computed = fnv1a64(data.data(), data.size() - 8);
    if (stored != computed)
        fail(ErrorKind::format,
             "checkpoint '" + path + "' failed integrity check (truncated or corrupted)");
}

CheckpointHeader parse_header(Reader& r) {
    char magic[8];
    r.bytes(magic, 8, "magic");
    if (std::memcmp(magic, kMagic, 8) != 0)
        fail(ErrorKind::format, "checkpoint '" + r.path + "': bad magic, not a checkpoint file");
    CheckpointHeader h;
    h.version = r.u32("version");
    if (h.version != kCheckpointVersion)
        fail(ErrorKind::format, "checkpoint '" + r.path + "': unsupported format version " +
                                    std::to_string(h.version) + " (expected " +
                                    std::to_string(kCheckpointVersion) + ")");
    h.config_hash = r.u64("config hash");
    h.seed = r.u64("seed");
    h.epoch = r.u32("epoch");
    h.step = r.u64("step");
    h.phi = r.f64("phi");
    h.rng_cursor = r.u64("rng cursor");
    h.profile = read_profile(r);
    h.n_blocks = r.u32("block count");
    return h;
}

} // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const RunConfig& cfg) {
    Writer w;
    w.bytes(kMagic, 8);
    w.u32(kCheckpointVersion);
    w.u64(config_hash(cfg));
    w.u64(cfg.seed);
    w.u32(state.epoch);
    w.u64(state.step);
    w.f64(state.phi);
    w.u64(state.rng_cursor);
    write_profile(w, cfg.profile);

    auto blocks = state.adapter.named_blocks();
    w.u32(static_cast<uint32_t>(3 * blocks.size()));
    for (auto& [name, m] : blocks) write_block(w, "adapter/" + name, *m);
    for (size_t i = 0; i < blocks.size(); ++i)
        write_block(w, "adam_m/" + blocks[i].first, state.adam.m[i]);
    for (size_t i = 0; i < blocks.size(); ++i)
        write_block(w, "adam_v/" + blocks[i].first, state.adam.v[i]);

    uint64_t sum = fnv1a64(w.buf.data(), w.buf.size());
    w.u64(sum);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(w.buf.data()),
              static_cast<std::streamsize>(w.buf.size()));
    if (!out) fail(ErrorKind::io, "write failure on checkpoint '" + path + "'");
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::vector<unsigned char> data = read_file(path);
    verify_container(data, path);
    Reader r{data.data(), data.size() - 8, 0, path};
    return parse_header(r);
}

TrainState load_checkpoint(const std::string& path, const RunConfig& cfg, bool force) {
    std::vector<unsigned char> data = read_file(path);
    verify_container(data, path);
    Reader r{data.data(), data.size() - 8, 0, path};
    CheckpointHeader h = parse_header(r);

    if (h.config_hash != config_hash(cfg) && !force)
        fail(ErrorKind::config_hash,
             "checkpoint '" + path + "' was written under a different config "
             "(pass force to load anyway)");

    // Rebuild the adapter structure from cfg to obtain shapes and ordering.
    RngStream throwaway(cfg.seed, "adapter_init");
    TrainState state;
    state.adapter = init_adapter(cfg, throwaway);
    state.adam = AdamState::init_like(state.adapter);
    state.epoch = h.epoch;
    state.step = h.step;
    state.phi = h.phi;
    state.rng_cursor = h.rng_cursor;

    auto blocks = state.adapter.named_blocks();
    if (h.n_blocks != 3 * blocks.size())
        fail(ErrorKind::format, "checkpoint '" + path + "': block count mismatch (" +
                                    std::to_string(h.n_blocks) + " vs expected " +
                                    std::to_string(3 * blocks.size()) + ")");

    for (uint32_t bi = 0; bi < h.n_blocks; ++bi) {
        uint32_t name_len = r.u32("block name length");
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len, "block name");
        uint32_t rows = r.u32("block rows");
        uint32_t cols = r.u32("block cols");

        Matrix* target = nullptr;
        std::string base;
        if (name.rfind("adapter/", 0) == 0) base = name.substr(8);
        else if (name.rfind("adam_m/", 0) == 0) base = name.substr(7);
        else if (name.rfind("adam_v/", 0) == 0) base = name.substr(7);
        else fail(ErrorKind::format, "checkpoint '" + path + "': unknown block '" + name + "'");
        for (size_t i = 0; i < blocks.size(); ++i) {
            if (blocks[i].first != base) continue;
            if (name.rfind("adapter/", 0) == 0) target = blocks[i].second;
            else if (name.rfind("adam_m/", 0) == 0) target = &state.adam.m[i];
            else target = &state.adam.v[i];
            break;
        }
        if (!target)
            fail(ErrorKind::format, "checkpoint '" + path + "': unknown block '" + name + "'");
        if (static_cast<Eigen::Index>(rows) != target->rows() ||
            static_cast<Eigen::Index>(cols) != target->cols())
            fail(ErrorKind::validation,
                 "checkpoint '" + path + "': block '" + name + "' has shape " +
                     std::to_string(rows) + "x" + std::to_string(cols) +
                     ", current config expects " + std::to_string(target->rows()) + "x" +
                     std::to_string(target->cols()));
        r.bytes(target->data(), sizeof(double) * rows * cols, "block payload");
    }
    if (r.off != r.n)
        fail(ErrorKind::format, "checkpoint '" + path + "': trailing bytes after last block");
    return state;
}

} // namespace glma
