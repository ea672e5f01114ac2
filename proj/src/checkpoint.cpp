// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/checkpoint.hpp"

#include "layerfuse/binary_io.hpp"
#include "layerfuse/model.hpp"
#include "layerfuse/train.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <sstream>

namespace lfuse {

namespace {

constexpr char kMagic[] = "HFCKPT1";
constexpr std::size_t kMagicLen = 7;
constexpr std::size_t kHeaderLen = kMagicLen + 4 + 8;

std::uint32_t crc_of(const char* data, std::size_t n) {
    return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

TensorRecord record_of(const std::string& name, const ad::Tensor& t) {
    return TensorRecord{name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
}

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

Checkpoint make_checkpoint(const Model& model, const Adam* optimizer, std::uint64_t step, double val_loss,
                           std::string config_echo) {
    Checkpoint ckpt;
    ckpt.config_echo = std::move(config_echo);
    ckpt.step = step;
    ckpt.val_loss = val_loss;
    const ParamList params = model.parameters();
    for (const auto& p : params) ckpt.tensors.push_back(record_of("param." + p.name, p.tensor));
    if (optimizer) {
        const auto& ps = optimizer->params();
        for (std::size_t k = 0; k < ps.size(); ++k) {
            ckpt.tensors.push_back({"adam.m." + ps[k].name, ps[k].tensor.shape(), optimizer->first_moments()[k]});
            ckpt.tensors.push_back({"adam.v." + ps[k].name, ps[k].tensor.shape(), optimizer->second_moments()[k]});
        }
        ckpt.tensors.push_back({"adam.t", {1}, {static_cast<double>(optimizer->steps())}});
    }
    return ckpt;
}

void restore_model(Model& model, const Checkpoint& ckpt) {
    for (auto& p : model.parameters()) {
        const TensorRecord* rec = ckpt.find("param." + p.name);
        if (!rec) throw CheckpointError(CheckpointError::Kind::Mismatch, "checkpoint lacks parameter " + p.name);
        if (rec->shape != p.tensor.shape())
            throw CheckpointError(CheckpointError::Kind::Mismatch, "parameter " + p.name + " has shape " +
                                                                       ad::shape_str(rec->shape) + ", model expects " +
                                                                       ad::shape_str(p.tensor.shape()));
        auto values = p.tensor.mutable_values();
        std::copy(rec->values.begin(), rec->values.end(), values.begin());
    }
}

void restore_optimizer(Adam& optimizer, const Checkpoint& ckpt) {
    const TensorRecord* t = ckpt.find("adam.t");
    if (!t) return;
    const auto& ps = optimizer.params();
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const TensorRecord* m = ckpt.find("adam.m." + ps[k].name);
        const TensorRecord* v = ckpt.find("adam.v." + ps[k].name);
        if (!m || !v || m->values.size() != ps[k].tensor.numel() || v->values.size() != ps[k].tensor.numel())
            throw CheckpointError(CheckpointError::Kind::Mismatch, "optimizer state missing or mis-sized for " + ps[k].name);
        optimizer.first_moments()[k] = m->values;
        optimizer.second_moments()[k] = v->values;
    }
    optimizer.set_steps(static_cast<std::size_t>(t->values.at(0)));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ostringstream payload;
    io::write_string(payload, ckpt.config_echo);
    io::write_u32(payload, static_cast<std::uint32_t>(ckpt.tensors.size() + 2));
    auto write_tensor = [&](const TensorRecord& t) {
        io::write_string(payload, t.name);
        io::write_u32(payload, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) io::write_u64(payload, d);
        for (double v : t.values) io::write_f64(payload, v);
    };
    write_tensor({"meta.step", {1}, {static_cast<double>(ckpt.step)}});
    write_tensor({"meta.val_loss", {1}, {ckpt.val_loss}});
    for (const auto& t : ckpt.tensors) write_tensor(t);

    std::ostringstream file;
    file.write(kMagic, kMagicLen);
    io::write_u32(file, ckpt.version);
    const std::string body = payload.str();
    io::write_u64(file, body.size());
    file << body;
    std::string bytes = file.str();
    const std::uint32_t crc = crc_of(bytes.data(), bytes.size());
    std::ostringstream tail;
    io::write_u32(tail, crc);
    bytes += tail.str();

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write failed: " + path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError(CheckpointError::Kind::Io, "cannot move checkpoint into place: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    using Kind = CheckpointError::Kind;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::Io, "cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0)
        throw CheckpointError(bytes.size() < kMagicLen ? Kind::Truncated : Kind::BadMagic,
                              "not a checkpoint file: " + path.string());
    if (bytes.size() < kHeaderLen) throw CheckpointError(Kind::Truncated, "truncated checkpoint header: " + path.string());
    std::istringstream header(bytes.substr(kMagicLen, kHeaderLen - kMagicLen));
    std::uint32_t version = 0;
    std::uint64_t payload_len = 0;
    io::read_u32(header, version);
    io::read_u64(header, payload_len);
    if (version != kCheckpointVersion)
        throw CheckpointError(Kind::Version, "checkpoint format version " + std::to_string(version) +
                                                 " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    if (bytes.size() != kHeaderLen + payload_len + 4)
        throw CheckpointError(Kind::Truncated, "checkpoint length " + std::to_string(bytes.size()) +
                                                   " does not match its header: " + path.string());
    std::istringstream tail(bytes.substr(bytes.size() - 4));
    std::uint32_t stored = 0;
    io::read_u32(tail, stored);
    if (stored != crc_of(bytes.data(), bytes.size() - 4))
        throw CheckpointError(Kind::Checksum, "checkpoint checksum mismatch: " + path.string());

    std::istringstream body(bytes.substr(kHeaderLen, payload_len));
    auto bad = [&] { return CheckpointError(Kind::Truncated, "malformed checkpoint payload: " + path.string()); };
    Checkpoint ckpt;
    ckpt.version = version;
    std::uint32_t count = 0;
    if (!io::read_string(body, ckpt.config_echo) || !io::read_u32(body, count)) throw bad();
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord t;
        std::uint32_t rank = 0;
        if (!io::read_string(body, t.name) || !io::read_u32(body, rank) || rank > 8) throw bad();
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            std::uint64_t d = 0;
            if (!io::read_u64(body, d)) throw bad();
            t.shape.push_back(d);
            n *= d;
        }
        if (n * 8 > payload_len) throw bad();
        t.values.resize(n);
        for (double& v : t.values)
            if (!io::read_f64(body, v)) throw bad();
        if (t.name == "meta.step")
            ckpt.step = static_cast<std::uint64_t>(t.values.at(0));
        else if (t.name == "meta.val_loss")
            ckpt.val_loss = t.values.at(0);
        else
            ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

}  // namespace lfuse
