// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/checkpoint.hpp"
#include "layerfuse/train.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

using namespace lfuse;
using lfuse::testing::TempDir;
using lfuse::testing::tiny_config;
using lfuse::testing::tiny_model;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CheckpointError::Kind load_error(const std::filesystem::path& p) {
    try {
        load_checkpoint(p);
    } catch (const CheckpointError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "load succeeded";
    return CheckpointError::Kind::Io;
}

struct Saved {
    TempDir dir{"ckpt"};
    std::filesystem::path path = dir.path() / "model.ckpt";
    Model model = tiny_model(21);

    Saved() {
        Adam adam(model.parameters());
        save_checkpoint(path, make_checkpoint(model, &adam, 17, 0.625, tiny_config().to_text()));
    }
};

}  // namespace

TEST(Checkpoint, RoundTripRestoresABitwiseIdenticalForward) {
    Saved s;
    const Checkpoint c = load_checkpoint(s.path);
    EXPECT_EQ(c.step, 17u);
    EXPECT_EQ(c.val_loss, 0.625);
    EXPECT_EQ(c.config_echo, tiny_config().to_text());
    Model restored = tiny_model(777);
    restore_model(restored, c);

    const auto cfg = tiny_config();
    const auto stack = synth_layer_stack(draw_content(cfg.synth, 5, std::nullopt, std::nullopt), cfg.synth, 5);
    ad::NoGradGuard no_grad;
    const int targets[] = {4, 5, 2};
    for (Task task : {Task::Asr, Task::Ser}) {
        const auto fa = s.model.run(stack, task, targets);
        const auto fb = restored.run(stack, task, targets);
        const auto ra = s.model.decoder_states(fa, task, 4), rb = restored.decoder_states(fb, task, 4);
        EXPECT_TRUE(std::ranges::equal(ra.values(), rb.values()));
    }
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
    Model model = tiny_model(22);
    Adam adam(model.parameters());
    adam.first_moments()[0][0] = 0.125;
    adam.second_moments()[1][0] = 2.5;
    adam.set_steps(9);
    TempDir dir("adam");
    save_checkpoint(dir.path() / "a.ckpt", make_checkpoint(model, &adam, 9, 1.0, ""));
    Model other = tiny_model(22);
    Adam fresh(other.parameters());
    restore_optimizer(fresh, load_checkpoint(dir.path() / "a.ckpt"));
    EXPECT_EQ(fresh.steps(), 9u);
    EXPECT_EQ(fresh.first_moments()[0][0], 0.125);
    EXPECT_EQ(fresh.second_moments()[1][0], 2.5);
}

TEST(Checkpoint, FileStartsWithMagicAndVersion) {
    Saved s;
    const auto bytes = read_bytes(s.path);
    EXPECT_EQ(bytes.substr(0, 7), "HFCKPT1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[7]), kCheckpointVersion);
    EXPECT_FALSE(std::filesystem::exists(s.path.string() + ".tmp"));
}

TEST(Checkpoint, EverySingleByteCorruptionIsDetected) {
    Saved s;
    const auto good = read_bytes(s.path);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        std::string bad = good;
        const std::size_t at = 19 + rng() % (good.size() - 19);
        bad[at] = static_cast<char>(bad[at] ^ (1 << (rng() % 8)));
        write_bytes(s.path, bad);
        EXPECT_EQ(load_error(s.path), CheckpointError::Kind::Checksum) << "byte " << at;
    }
}

TEST(Checkpoint, NewerVersionIsRefused) {
    Saved s;
    auto bytes = read_bytes(s.path);
    bytes[7] = static_cast<char>(kCheckpointVersion + 1);
    write_bytes(s.path, bytes);
    try {
        load_checkpoint(s.path);
        FAIL();
    } catch (const CheckpointError& e) {
        EXPECT_EQ(e.kind(), CheckpointError::Kind::Version);
        EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
    }
}

TEST(Checkpoint, TruncationIsDetected) {
    Saved s;
    const auto bytes = read_bytes(s.path);
    for (std::size_t keep : {std::size_t{3}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
        write_bytes(s.path, bytes.substr(0, keep));
        EXPECT_EQ(load_error(s.path), CheckpointError::Kind::Truncated) << keep;
    }
}

TEST(Checkpoint, ForeignFilesAndMissingFiles) {
    Saved s;
    write_bytes(s.path, "PK\x03\x04 this is not a checkpoint at all");
    EXPECT_EQ(load_error(s.path), CheckpointError::Kind::BadMagic);
    EXPECT_EQ(load_error(s.dir.path() / "absent.ckpt"), CheckpointError::Kind::Io);
}

TEST(Checkpoint, ArchitectureMismatchIsReported) {
    Saved s;
    auto cfg = tiny_config();
    cfg.d_model = 32;
    Model wider = Model::init(ModelConfig::from_run(cfg), 1);
    try {
        restore_model(wider, load_checkpoint(s.path));
        FAIL();
    } catch (const CheckpointError& e) {
        EXPECT_EQ(e.kind(), CheckpointError::Kind::Mismatch);
    }
}
