#include "kfuse/pipeline/messages.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

#include <openssl/evp.h>

#include "kfuse/errors.hpp"
#include "kfuse/pipeline/config.hpp"

namespace kfuse {

using io::Json;

namespace {

std::string sha256_hex(const std::string& text) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw InternalConsistencyError("SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

Json domain_json(const Box& box) {
    Json out = Json::array();
    for (const auto& iv : box) out.push_back(Json::array({iv.lo, iv.hi}));
    return out;
}

Box domain_from(const Json& j) {
    Box box;
    for (const auto& iv : j) box.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
    return box;
}

Json raw_descriptors(const FusionBasis& basis) {
    Json out = Json::array();
    for (AgentId a : {AgentId::First, AgentId::Second}) {
        for (const auto& f : basis.agent(a)->features()) {
            Json d = feature_to_json(f);
            d["agent"] = to_int(a);
            d["label"] = f.descriptor();
            out.push_back(d);
        }
    }
    return out;
}

}  // namespace

std::string_view direction_name(Direction d) noexcept { return d == Direction::Upload ? "upload" : "download"; }

const std::vector<std::string>& message_schema_keys() {
    static const std::vector<std::string> keys{"direction", "agent_id", "basis_digest", "coeffs"};
    return keys;
}

Json TransferMessage::to_json() const {
    return Json{{"direction", std::string(direction_name(direction))},
                {"agent_id", to_int(agent)},
                {"basis_digest", basis_digest},
                {"coeffs", vector_to_json(coeffs)}};
}

TransferMessage TransferMessage::from_json(const Json& j) {
    if (!j.is_object()) {
        throw InputError("message must be a JSON object");
    }
    const auto& keys = message_schema_keys();
    for (const auto& [key, value] : j.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw InputError("message has unexpected field '" + key + "'");
        }
    }
    for (const auto& key : keys) {
        if (!j.contains(key)) throw InputError("message is missing field '" + key + "'");
    }
    TransferMessage m;
    const auto dir = j.at("direction").get<std::string>();
    if (dir == "upload") {
        m.direction = Direction::Upload;
    } else if (dir == "download") {
        m.direction = Direction::Download;
    } else {
        throw InputError("message direction must be upload or download");
    }
    m.agent = agent_from_int(j.at("agent_id").get<int>());
    m.basis_digest = j.at("basis_digest").get<std::string>();
    m.coeffs = vector_from_json(j.at("coeffs"));
    return m;
}

FusionFunction TransferMessage::payload(const FusionBasisPtr& basis) const {
    if (basis_digest != kfuse::basis_digest(*basis)) {
        throw BindingError("message refers to a different fusion basis");
    }
    if (static_cast<std::size_t>(coeffs.size()) != basis->rank()) {
        throw BindingError("message payload length does not match the basis rank");
    }
    return FusionFunction(basis, coeffs);
}

Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) {
        throw InputError("matrix must be a non-empty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != cols) throw InputError("matrix rows have different lengths");
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector vector_from_json(const Json& j) {
    if (!j.is_array()) throw InputError("vector must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw InputError("vector entries must be numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

std::string basis_digest(const FusionBasis& basis) {
    const Json canonical{{"raw_feature_descriptors", raw_descriptors(basis)},
                         {"domain", domain_json(basis.domain())},
                         {"T", matrix_to_json(basis.basis_map())}};
    return sha256_hex(io::dump(canonical));
}

Json operators_to_json(const FusionBasis& basis) {
    const auto l1 = operator_matrix(basis, AgentId::First);
    const auto l2 = operator_matrix(basis, AgentId::Second);
    return Json{{"rank", basis.rank()},
                {"digest", basis_digest(basis)},
                {"domain", domain_json(basis.domain())},
                {"raw_feature_descriptors", raw_descriptors(basis)},
                {"T", matrix_to_json(basis.basis_map())},
                {"L1", matrix_to_json(l1.matrix)},
                {"L2", matrix_to_json(l2.matrix)},
                {"sqrtL1", matrix_to_json(sqrt_operator(l1).matrix)},
                {"sqrtL2", matrix_to_json(sqrt_operator(l2).matrix)}};
}

FusionBasisPtr basis_from_operators_json(const Json& j) {
    try {
        const Box domain = domain_from(j.at("domain"));
        std::vector<Feature> first, second;
        for (const auto& d : j.at("raw_feature_descriptors")) {
            const int agent = d.at("agent").get<int>();
            (agent_from_int(agent) == AgentId::First ? first : second).push_back(feature_from_json(d));
        }
        auto basis = FusionBasis::from_map(FeatureSet::create(std::move(first), domain),
                                           FeatureSet::create(std::move(second), domain), matrix_from_json(j.at("T")));
        if (j.contains("digest") && j.at("digest").get<std::string>() != basis_digest(*basis)) {
            throw ConstructionError("operators.json digest does not match its contents");
        }
        return basis;
    } catch (const Json::exception& e) {
        throw InputError(std::string("malformed operators.json: ") + e.what());
    }
}

void write_messages(const std::filesystem::path& path, const std::vector<TransferMessage>& messages) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    for (const auto& m : messages) {
        io::write(out, m.to_json());
        out << '\n';
    }
}

std::vector<TransferMessage> read_messages(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path.string());
    std::vector<TransferMessage> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(TransferMessage::from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw InputError("malformed message line: " + std::string(e.what()));
        }
    }
    return out;
}

}  // namespace kfuse
