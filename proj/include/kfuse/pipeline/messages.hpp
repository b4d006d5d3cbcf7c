#pragma once

// What crosses the agent / fusion-center boundary: coefficient vectors in the
// psi basis tagged with a digest of the basis they refer to. Messages never
// carry sample points or targets.

#include <filesystem>
#include <string>
#include <vector>

#include "kfuse/fusion_space.hpp"
#include "kfuse/pipeline/json_writer.hpp"

namespace kfuse {

enum class Direction { Upload, Download };

struct TransferMessage {
    Direction direction = Direction::Upload;
    AgentId agent = AgentId::First;
    std::string basis_digest;
    Vector coeffs;

    io::Json to_json() const;
    // Rejects unknown or missing keys.
    static TransferMessage from_json(const io::Json& j);

    // Binds the payload to a basis after checking digest and length.
    FusionFunction payload(const FusionBasisPtr& basis) const;
};

std::string_view direction_name(Direction d) noexcept;

// Exact set of keys a serialized message may contain.
const std::vector<std::string>& message_schema_keys();

// operators.json: rank, raw feature descriptors, T, L1, L2, sqrtL1, sqrtL2.
io::Json operators_to_json(const FusionBasis& basis);

// Rebuilds the agent feature sets and the fusion basis from operators.json.
FusionBasisPtr basis_from_operators_json(const io::Json& j);

// SHA-256 (hex) of the canonical serialization of the features and T.
std::string basis_digest(const FusionBasis& basis);

io::Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const io::Json& j);
io::Json vector_to_json(const Vector& v);
Vector vector_from_json(const io::Json& j);

void write_messages(const std::filesystem::path& path, const std::vector<TransferMessage>& messages);
std::vector<TransferMessage> read_messages(const std::filesystem::path& path);

}  // namespace kfuse
