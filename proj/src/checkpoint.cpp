#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/pipeline.hpp"

namespace lumidiff::pipeline {

namespace {

constexpr char kMagic[8] = {'L', 'M', 'D', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

using detail::read_doubles;
using detail::read_pod;
using detail::read_string;
using detail::write_doubles;
using detail::write_pod;
using detail::write_string;

void write_params(std::ostream& os, const nn::ParameterSet& ps) {
    write_pod<std::uint64_t>(os, ps.tensors());
    for (std::size_t i = 0; i < ps.tensors(); ++i) {
        write_string(os, ps.name(i));
        const Shape s = ps[i].shape();
        write_pod<std::int32_t>(os, s.c);
        write_pod<std::int32_t>(os, s.h);
        write_pod<std::int32_t>(os, s.w);
        write_doubles(os, ps[i].data(), ps[i].size());
    }
}

void read_params(std::istream& is, nn::ParameterSet& ps, const char* which) {
    const auto n = read_pod<std::uint64_t>(is);
    if (n != ps.tensors()) throw LoadError(std::string(which) + ": parameter count does not match the configuration");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string name = read_string(is, 1024);
        Shape s;
        s.c = read_pod<std::int32_t>(is);
        s.h = read_pod<std::int32_t>(is);
        s.w = read_pod<std::int32_t>(is);
        if (name != ps.name(i) || s != ps[i].shape())
            throw LoadError(std::string(which) + ": tensor '" + name + "' does not match the configuration");
        auto values = read_doubles(is, s.size());
        std::copy(values.begin(), values.end(), ps[i].values().begin());
    }
}

void write_adam(std::ostream& os, const nn::Adam& opt) {
    write_pod<std::int64_t>(os, opt.steps());
    write_pod<std::uint64_t>(os, opt.first_moment().size());
    write_doubles(os, opt.first_moment().data(), opt.first_moment().size());
    write_doubles(os, opt.second_moment().data(), opt.second_moment().size());
}

void read_adam(std::istream& is, nn::Adam& opt, std::size_t expected) {
    const auto steps = read_pod<std::int64_t>(is);
    const auto n = read_pod<std::uint64_t>(is);
    if (n != expected) throw LoadError("optimizer state size does not match the parameters");
    auto m = read_doubles(is, n);
    auto v = read_doubles(is, n);
    opt.restore(steps, std::move(m), std::move(v));
}

}  // namespace

std::string serialize_checkpoint(const TrainState& st) {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 8);
    write_pod<std::uint32_t>(os, kVersion);
    write_pod<std::uint64_t>(os, st.config.hash());
    write_pod<std::int64_t>(os, st.iteration);
    write_string(os, st.config.trajectory_toml());
    write_pod<std::uint64_t>(os, st.schedule.beta.size());
    write_doubles(os, st.schedule.beta.data(), st.schedule.beta.size());
    write_params(os, st.illum.params());
    write_params(os, st.unet.params());
    write_adam(os, st.illum_opt);
    write_adam(os, st.unet_opt);
    write_string(os, st.rng.state());
    std::string bytes = os.str();
    const std::uint64_t sum = fnv1a(bytes);
    bytes.append(reinterpret_cast<const char*>(&sum), sizeof sum);
    return bytes;
}

TrainState deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 + 4 + 8 + 8 || !std::equal(kMagic, kMagic + 8, bytes.begin()))
        throw LoadError("not a checkpoint file");
    std::uint64_t stored = 0;
    std::copy_n(bytes.end() - 8, 8, reinterpret_cast<char*>(&stored));
    const std::string_view body(bytes.data(), bytes.size() - 8);
    if (fnv1a(body) != stored) throw LoadError("checkpoint checksum mismatch (file is corrupted or truncated)");

    std::istringstream is(std::string(body), std::ios::binary);
    is.ignore(8);
    if (read_pod<std::uint32_t>(is) != kVersion) throw LoadError("unsupported checkpoint version");
    const auto hash = read_pod<std::uint64_t>(is);
    const auto iteration = read_pod<std::int64_t>(is);
    const std::string toml = read_string(is);
    RunConfig cfg;
    try {
        cfg = config_from_toml(toml, "<checkpoint>");
    } catch (const ConfigError& e) {
        throw LoadError(std::string("checkpoint configuration is invalid: ") + e.what());
    }
    if (cfg.hash() != hash) throw LoadError("checkpoint configuration hash mismatch");
    TrainState st = TrainState::initialize(cfg);
    st.iteration = iteration;
    const auto t = read_pod<std::uint64_t>(is);
    if (t != st.schedule.beta.size()) throw LoadError("checkpoint schedule length does not match its configuration");
    st.schedule = diffusion::schedule_from_betas(read_doubles(is, t));
    read_params(is, st.illum.params(), "illumination network");
    read_params(is, st.unet.params(), "noise predictor");
    read_adam(is, st.illum_opt, st.illum.params().count());
    read_adam(is, st.unet_opt, st.unet.params().count());
    st.rng.set_state(read_string(is));
    if (is.peek() != std::char_traits<char>::eof()) throw LoadError("trailing bytes in checkpoint");
    return st;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::string bytes = serialize_checkpoint(state);
    // write-then-rename so an interrupted save never leaves a truncated checkpoint
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("failed writing checkpoint '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return deserialize_checkpoint(ss.str());
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

}  // namespace lumidiff::pipeline
