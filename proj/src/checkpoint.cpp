#include "koppa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "koppa/error.hpp"

namespace koppa {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

void put_doubles(std::ostream& out, std::span<const double> v) {
    put_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void put_matrix(std::ostream& out, const Matrix& m) {
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
}

std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

Vector get_doubles(std::istream& in) {
    const std::uint64_t n = get_u64(in);
    Vector v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    return v;
}

Matrix get_matrix(std::istream& in) {
    const std::uint64_t rows = get_u64(in);
    const std::uint64_t cols = get_u64(in);
    Vector data(rows * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    return Matrix(rows, cols, std::move(data));
}

void put_section(std::ostream& out, const char tag[4], const std::string& payload) {
    out.write(tag, 4);
    put_u64(out, payload.size());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

std::string encode_encoder(const SurrogateEncoder& enc) {
    std::ostringstream s;
    put_u64(s, enc.dims.d_in);
    put_u64(s, enc.dims.hidden);
    put_u64(s, enc.dims.d_q);
    put_u64(s, enc.dims.d_z);
    put_u64(s, enc.dims.d_p);
    put_u64(s, enc.seed);
    put_matrix(s, enc.w_q);
    put_matrix(s, enc.w1);
    put_doubles(s, enc.b1);
    put_matrix(s, enc.v_p);
    put_matrix(s, enc.w2);
    put_doubles(s, enc.b2);
    return s.str();
}

SurrogateEncoder decode_encoder(std::istream& in) {
    SurrogateEncoder enc;
    enc.dims.d_in = get_u64(in);
    enc.dims.hidden = get_u64(in);
    enc.dims.d_q = get_u64(in);
    enc.dims.d_z = get_u64(in);
    enc.dims.d_p = get_u64(in);
    enc.seed = get_u64(in);
    enc.w_q = get_matrix(in);
    enc.w1 = get_matrix(in);
    enc.b1 = get_doubles(in);
    enc.v_p = get_matrix(in);
    enc.w2 = get_matrix(in);
    enc.b2 = get_doubles(in);
    return enc;
}

std::string encode_pool(const PromptPool& pool) {
    std::ostringstream s;
    put_u64(s, pool.key_dim);
    put_u64(s, pool.prompt_dim);
    put_u64(s, pool.prompts_per_task);
    put_u64(s, pool.blocks.size());
    for (const PromptBlock& b : pool.blocks) {
        put_matrix(s, b.keys);
        put_matrix(s, b.prompts);
        put_u32(s, b.masks.has_value() ? 1 : 0);
        if (b.masks) put_matrix(s, *b.masks);
        put_u32(s, b.frozen ? 1 : 0);
    }
    return s.str();
}

PromptPool decode_pool(std::istream& in) {
    PromptPool pool;
    pool.key_dim = get_u64(in);
    pool.prompt_dim = get_u64(in);
    pool.prompts_per_task = get_u64(in);
    const std::uint64_t blocks = get_u64(in);
    for (std::uint64_t i = 0; i < blocks; ++i) {
        PromptBlock b;
        b.keys = get_matrix(in);
        b.prompts = get_matrix(in);
        if (get_u32(in) != 0) b.masks = get_matrix(in);
        b.frozen = get_u32(in) != 0;
        pool.blocks.push_back(std::move(b));
    }
    return pool;
}

std::string encode_basis(const SubspaceBasis& basis) {
    std::ostringstream s;
    put_u64(s, basis.dim);
    put_u64(s, basis.task_count);
    put_matrix(s, basis.basis);
    return s.str();
}

SubspaceBasis decode_basis(std::istream& in) {
    SubspaceBasis b;
    b.dim = get_u64(in);
    b.task_count = get_u64(in);
    b.basis = get_matrix(in);
    return b;
}

std::string encode_buffer(const PrototypeBuffer& buf) {
    std::ostringstream s;
    put_u64(s, buf.capacity_per_task);
    put_u64(s, buf.feature_dim);
    put_u64(s, buf.per_task.size());
    for (const auto& task : buf.per_task) {
        put_u64(s, task.size());
        for (const Prototype& p : task) {
            put_u32(s, static_cast<std::uint32_t>(p.label));
            put_doubles(s, p.features);
        }
    }
    return s.str();
}

PrototypeBuffer decode_buffer(std::istream& in) {
    PrototypeBuffer buf;
    buf.capacity_per_task = get_u64(in);
    buf.feature_dim = get_u64(in);
    const std::uint64_t tasks = get_u64(in);
    for (std::uint64_t t = 0; t < tasks; ++t) {
        const std::uint64_t n = get_u64(in);
        std::vector<Prototype> entries;
        entries.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            Prototype p;
            p.label = static_cast<int>(get_u32(in));
            p.features = get_doubles(in);
            entries.push_back(std::move(p));
        }
        buf.per_task.push_back(std::move(entries));
    }
    return buf;
}

template <typename Head>
std::string encode_head(const Head& head) {
    std::ostringstream s;
    put_u64(s, head.w.size());
    for (std::size_t b = 0; b < head.w.size(); ++b) {
        put_matrix(s, head.w[b]);
        put_doubles(s, head.b[b]);
    }
    return s.str();
}

template <typename Head>
Head decode_head(std::istream& in) {
    Head head;
    const std::uint64_t blocks = get_u64(in);
    for (std::uint64_t b = 0; b < blocks; ++b) {
        head.w.push_back(get_matrix(in));
        head.b.push_back(get_doubles(in));
    }
    return head;
}

} // namespace

void save_checkpoint(const std::string& path, const TrainState& state, const RunConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open checkpoint for writing: " + path);
    }
    out.write("KOPA", 4);
    put_u32(out, kCheckpointVersion);
    put_section(out, "CONF", config_to_json(cfg).dump());
    put_section(out, "ENCO", encode_encoder(state.model.encoder));
    put_section(out, "POOL", encode_pool(state.pool));
    put_section(out, "BASI", encode_basis(state.basis));
    put_section(out, "BUFF", encode_buffer(state.buffer));
    put_section(out, "CEHD", encode_head(state.model.ce));
    put_section(out, "OVAH", encode_head(state.model.ova));
    if (!out) {
        throw IoError("failed writing checkpoint: " + path);
    }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "KOPA", 4) != 0) {
        throw ParseError(path + ": not a checkpoint (bad magic)");
    }
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion) {
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    LoadedCheckpoint loaded;
    bool saw_conf = false;
    while (true) {
        char tag[4];
        in.read(tag, 4);
        if (!in) break;
        const std::uint64_t len = get_u64(in);
        std::string payload(len, '\0');
        in.read(payload.data(), static_cast<std::streamsize>(len));
        if (!in) {
            throw ParseError(path + ": truncated section");
        }
        std::istringstream s(payload);
        if (std::memcmp(tag, "CONF", 4) == 0) {
            loaded.config = config_from_json(nlohmann::json::parse(payload));
            saw_conf = true;
        } else if (std::memcmp(tag, "ENCO", 4) == 0) {
            loaded.state.model.encoder = decode_encoder(s);
        } else if (std::memcmp(tag, "POOL", 4) == 0) {
            loaded.state.pool = decode_pool(s);
        } else if (std::memcmp(tag, "BASI", 4) == 0) {
            loaded.state.basis = decode_basis(s);
        } else if (std::memcmp(tag, "BUFF", 4) == 0) {
            loaded.state.buffer = decode_buffer(s);
        } else if (std::memcmp(tag, "CEHD", 4) == 0) {
            loaded.state.model.ce = decode_head<CeHead>(s);
        } else if (std::memcmp(tag, "OVAH", 4) == 0) {
            loaded.state.model.ova = decode_head<OvaHead>(s);
        }
        // Unknown tags are skipped for forward compatibility.
    }
    if (!saw_conf) {
        throw ParseError(path + ": missing CONF section");
    }
    loaded.state.tasks_done = loaded.state.pool.task_count();
    return loaded;
}

nlohmann::json checkpoint_summary(const std::string& path) {
    const LoadedCheckpoint loaded = load_checkpoint(path);
    const TrainState& st = loaded.state;
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["mode"] = to_string(loaded.config.mode);
    j["tasks"] = st.pool.task_count();
    j["pool"] = {{"blocks", st.pool.task_count()},
                 {"prompts_per_task", st.pool.prompts_per_task},
                 {"key_dim", st.pool.key_dim},
                 {"prompt_dim", st.pool.prompt_dim}};
    j["basis"] = {{"dim", st.basis.dim}, {"columns", st.basis.columns()}};
    j["prototypes"] = {{"capacity_per_task", st.buffer.capacity_per_task},
                       {"stored", st.buffer.total_entries()}};
    const std::size_t basis_bytes = st.basis.dim * st.basis.columns() * sizeof(double);
    const std::size_t proto_bytes = st.buffer.accounted_bytes();
    j["memory"] = {{"basis_bytes", basis_bytes},
                   {"prototype_bytes", proto_bytes},
                   {"total_bytes", basis_bytes + proto_bytes}};
    return j;
}

} // namespace koppa
