#pragma once

#include <filesystem>

#include "steerlab/artifact_io.hpp"
#include "steerlab/toymodel.hpp"

namespace steerlab::toy {

/// Model checkpoints reuse the artifact container format.
inline void save_model(const std::filesystem::path& path, const ToyModel& m) {
    io::BlockFile file;
    io::json dims = {{"vocab_size", m.dims.vocab_size},
                     {"d", m.dims.d},
                     {"n_layers", m.dims.n_layers},
                     {"image_feature_dim", m.dims.image_feature_dim},
                     {"image_tokens", m.dims.image_tokens},
                     {"seed", m.seed}};
    file.blocks.push_back({"model/embedding", dims, m.embedding.data});
    for (std::size_t l = 0; l < m.dims.n_layers; ++l) {
        const std::string suffix = "/" + std::to_string(l);
        file.blocks.push_back({"model/mix" + suffix, io::json::object(), m.mix[l].data});
        file.blocks.push_back({"model/recur" + suffix, io::json::object(), m.recur[l].data});
        file.blocks.push_back({"model/bias" + suffix, io::json::object(), m.bias[l]});
    }
    file.blocks.push_back({"model/readout", io::json::object(), m.readout.data});
    file.blocks.push_back({"model/image_adapter", io::json::object(), m.image_adapter.data});
    file.save(path);
}

inline ToyModel load_model(const std::filesystem::path& path) {
    io::BlockFile file = io::BlockFile::load(path);
    const io::BlockFile::Block& emb = file.require("model/embedding");
    ToyModel m;
    m.dims.vocab_size = emb.meta.value("vocab_size", std::size_t{0});
    m.dims.d = emb.meta.value("d", std::size_t{0});
    m.dims.n_layers = emb.meta.value("n_layers", std::size_t{0});
    m.dims.image_feature_dim = emb.meta.value("image_feature_dim", std::size_t{8});
    m.dims.image_tokens = emb.meta.value("image_tokens", std::size_t{2});
    m.seed = emb.meta.value("seed", std::uint64_t{0});
    m.embedding = io::mat_from_floats(emb.floats, m.dims.vocab_size, m.dims.d);
    for (std::size_t l = 0; l < m.dims.n_layers; ++l) {
        const std::string suffix = "/" + std::to_string(l);
        m.mix.push_back(io::mat_from_floats(
            file.require("model/mix" + suffix).floats, m.dims.d, m.dims.d));
        m.recur.push_back(io::mat_from_floats(
            file.require("model/recur" + suffix).floats, m.dims.d, m.dims.d));
        m.bias.push_back(file.require("model/bias" + suffix).floats);
    }
    m.readout = io::mat_from_floats(file.require("model/readout").floats,
                                    m.dims.vocab_size, m.dims.d);
    const auto& adapter = file.require("model/image_adapter");
    m.image_adapter = io::mat_from_floats(
        adapter.floats, m.dims.d, m.dims.image_feature_dim / m.dims.image_tokens);
    return m;
}

}  // namespace steerlab::toy
