#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerlab/rng.hpp"
#include "steerlab/subspace.hpp"

namespace steerlab::io {

using json = nlohmann::json;

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr const char* kContainerFormat = "steerlab-container";

/// Versioned persistence container: a text header of JSON lines followed by
/// raw little-endian float64 blocks. Round trips are bit-exact and the
/// payload carries a checksum.
struct BlockFile {
    struct Block {
        std::string name;
        json meta;  // free-form; "name" and "floats" are reserved
        std::vector<double> floats;
    };

    std::vector<Block> blocks;

    const Block* find(const std::string& name) const {
        for (const Block& b : blocks)
            if (b.name == name) return &b;
        return nullptr;
    }

    const Block& require(const std::string& name) const {
        const Block* b = find(name);
        if (!b) throw IoError("missing block: " + name);
        return *b;
    }

    void save(const std::filesystem::path& path) const {
        std::string payload;
        for (const Block& b : blocks) {
            for (double v : b.floats) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, sizeof(bits));
                for (int i = 0; i < 8; ++i)
                    payload.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
            }
        }
        char checksum[17];
        std::snprintf(checksum, sizeof(checksum), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a64(payload.data(), payload.size())));

        std::ostringstream out;
        json header = {{"format", kContainerFormat},
                       {"version", kContainerVersion},
                       {"block_count", blocks.size()},
                       {"payload_checksum", std::string(checksum)}};
        out << header.dump() << '\n';
        for (const Block& b : blocks) {
            json meta = b.meta;
            meta["name"] = b.name;
            meta["floats"] = b.floats.size();
            out << meta.dump() << '\n';
        }
        out << "BINARY\n" << payload;

        // write-temp-then-rename keeps readers from seeing partial files
        const std::filesystem::path tmp = path.string() + ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw IoError("cannot open for write: " + tmp.string());
            const std::string s = out.str();
            f.write(s.data(), static_cast<std::streamsize>(s.size()));
            if (!f) throw IoError("write failed: " + tmp.string());
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw IoError("rename failed: " + path.string());
    }

    static BlockFile load(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open: " + path.string());
        std::stringstream buffer;
        buffer << f.rdbuf();
        std::string content = buffer.str();

        std::size_t pos = 0;
        auto next_line = [&]() -> std::string {
            const std::size_t nl = content.find('\n', pos);
            if (nl == std::string::npos) throw IoError("truncated container header");
            std::string line = content.substr(pos, nl - pos);
            pos = nl + 1;
            return line;
        };

        json header;
        try {
            header = json::parse(next_line());
        } catch (const json::exception&) {
            throw IoError("malformed container header: " + path.string());
        }
        if (header.value("format", "") != kContainerFormat)
            throw VersionMismatch("not a steerlab container: " + path.string());
        if (header.value("version", 0u) != kContainerVersion)
            throw VersionMismatch("unsupported container version in " + path.string());

        const std::size_t block_count = header.value("block_count", std::size_t{0});
        BlockFile file;
        std::vector<std::size_t> sizes;
        for (std::size_t i = 0; i < block_count; ++i) {
            json meta;
            try {
                meta = json::parse(next_line());
            } catch (const json::exception&) {
                throw IoError("malformed block header");
            }
            Block b;
            b.name = meta.value("name", "");
            sizes.push_back(meta.value("floats", std::size_t{0}));
            meta.erase("name");
            meta.erase("floats");
            b.meta = std::move(meta);
            file.blocks.push_back(std::move(b));
        }
        if (next_line() != "BINARY") throw IoError("missing BINARY marker");

        const std::string payload = content.substr(pos);
        std::size_t want_bytes = 0;
        for (std::size_t s : sizes) want_bytes += s * 8;
        if (payload.size() != want_bytes) throw IoError("payload size mismatch");

        char checksum[17];
        std::snprintf(checksum, sizeof(checksum), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a64(payload.data(), payload.size())));
        if (header.value("payload_checksum", "") != std::string(checksum))
            throw ChecksumMismatch(path.string());

        std::size_t off = 0;
        for (std::size_t i = 0; i < block_count; ++i) {
            file.blocks[i].floats.resize(sizes[i]);
            for (std::size_t k = 0; k < sizes[i]; ++k) {
                std::uint64_t bits = 0;
                for (int byte = 0; byte < 8; ++byte)
                    bits |= static_cast<std::uint64_t>(
                                static_cast<unsigned char>(payload[off + 8 * k + byte]))
                            << (8 * byte);
                double v;
                std::memcpy(&v, &bits, sizeof(v));
                file.blocks[i].floats[k] = v;
            }
            off += sizes[i] * 8;
        }
        return file;
    }
};

inline std::vector<double> mat_floats(const Mat& m) { return m.data; }

inline Mat mat_from_floats(const std::vector<double>& floats, std::size_t rows,
                           std::size_t cols) {
    if (floats.size() != rows * cols) throw IoError("block shape mismatch");
    Mat m(rows, cols);
    m.data = floats;
    return m;
}

/// Persist subspace artifacts and prototype sets into one container.
inline void save_artifacts(const std::filesystem::path& path,
                           const std::vector<subspace::SubspaceArtifact>& artifacts,
                           const std::vector<subspace::PrototypeSet>& prototypes) {
    BlockFile file;
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
        const auto& a = artifacts[i];
        const std::string prefix = "artifact/" + std::to_string(i);
        json meta = {{"kind", subspace::to_string(a.kind)},
                     {"layer", a.layer},
                     {"d", a.basis.rows},
                     {"k", a.rank},
                     {"eta", a.eta},
                     {"seed", a.seed},
                     {"items", a.item_count},
                     {"artifact_version", a.version}};
        file.blocks.push_back({prefix + "/basis", meta, mat_floats(a.basis)});
        file.blocks.push_back({prefix + "/mean", json::object(), a.centering_mean});
        file.blocks.push_back({prefix + "/spectrum", json::object(), a.spectrum});
    }
    for (std::size_t i = 0; i < prototypes.size(); ++i) {
        const auto& p = prototypes[i];
        const std::string prefix = "prototypes/" + std::to_string(i);
        Mat dirs(p.directions.size(), p.directions[0].size());
        for (std::size_t r = 0; r < p.directions.size(); ++r)
            for (std::size_t c = 0; c < p.directions[r].size(); ++c)
                dirs(r, c) = p.directions[r][c];
        json meta = {{"layer", p.layer},
                     {"count", p.directions.size()},
                     {"d", p.directions[0].size()}};
        file.blocks.push_back({prefix + "/directions", meta, mat_floats(dirs)});
        file.blocks.push_back({prefix + "/weights", json::object(), p.weights});
    }
    file.save(path);
}

inline std::pair<std::vector<subspace::SubspaceArtifact>,
                 std::vector<subspace::PrototypeSet>>
load_artifacts(const std::filesystem::path& path) {
    BlockFile file = BlockFile::load(path);
    std::vector<subspace::SubspaceArtifact> artifacts;
    std::vector<subspace::PrototypeSet> prototypes;
    for (std::size_t i = 0;; ++i) {
        const std::string prefix = "artifact/" + std::to_string(i);
        const BlockFile::Block* basis = file.find(prefix + "/basis");
        if (!basis) break;
        subspace::SubspaceArtifact a;
        a.kind = subspace::subspace_kind_from_string(basis->meta.value("kind", ""));
        a.layer = basis->meta.value("layer", std::size_t{0});
        const auto d = basis->meta.value("d", std::size_t{0});
        a.rank = basis->meta.value("k", std::size_t{0});
        a.eta = basis->meta.value("eta", 0.0);
        a.seed = basis->meta.value("seed", std::uint64_t{0});
        a.item_count = basis->meta.value("items", std::size_t{0});
        a.version = basis->meta.value("artifact_version", 1u);
        a.basis = mat_from_floats(basis->floats, d, a.rank);
        a.centering_mean = file.require(prefix + "/mean").floats;
        a.spectrum = file.require(prefix + "/spectrum").floats;
        a.principal_direction = a.basis.col(0);
        artifacts.push_back(std::move(a));
    }
    for (std::size_t i = 0;; ++i) {
        const std::string prefix = "prototypes/" + std::to_string(i);
        const BlockFile::Block* dirs = file.find(prefix + "/directions");
        if (!dirs) break;
        subspace::PrototypeSet p;
        p.layer = dirs->meta.value("layer", std::size_t{0});
        const auto count = dirs->meta.value("count", std::size_t{0});
        const auto d = dirs->meta.value("d", std::size_t{0});
        Mat m = mat_from_floats(dirs->floats, count, d);
        for (std::size_t r = 0; r < count; ++r) {
            Vec v(d);
            for (std::size_t c = 0; c < d; ++c) v[c] = m(r, c);
            p.directions.push_back(std::move(v));
        }
        p.weights = file.require(prefix + "/weights").floats;
        prototypes.push_back(std::move(p));
    }
    return {std::move(artifacts), std::move(prototypes)};
}

}  // namespace steerlab::io
