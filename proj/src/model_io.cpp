#include "codecomp/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "codecomp/md5.hpp"

CODECOMP_NN_BEGIN

namespace {

template <class T>
void put(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return value;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ModelFormatError("model file is truncated");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const CompletionModel& model) {
    std::string out(kModelMagic);
    put<std::uint32_t>(out, kModelFormatVersion);
    const nlohmann::json header = {{"config", to_json(model.config())}, {"artifacts", model.artifacts()}};
    const std::string text = header.dump();
    put<std::uint64_t>(out, text.size());
    out += text;
    const auto params = model.parameters();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, p] : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.shape.size()));
        for (std::size_t d : p->value.shape) put<std::uint64_t>(out, d);
        for (real v : p->value.data) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

CompletionModel deserialize_model(std::string_view bytes) {
    Reader in(bytes);
    if (bytes.size() < kModelMagic.size() || in.take(kModelMagic.size()) != kModelMagic) {
        throw ModelFormatError("not a model file (bad magic)");
    }
    const auto version = in.get<std::uint32_t>();
    if (version != kModelFormatVersion) {
        throw ModelFormatError("unsupported model format version " + std::to_string(version));
    }
    const auto header_size = in.get<std::uint64_t>();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.take(header_size));
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError(std::string("corrupt model header: ") + e.what());
    }

    std::map<std::string, Tensor> tensors;
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t t = 0; t < count; ++t) {
        std::string name(in.take(in.get<std::uint32_t>()));
        Shape shape(in.get<std::uint32_t>());
        std::size_t items = 1;
        for (auto& d : shape) {
            d = in.get<std::uint64_t>();
            if (d == 0 || d > in.remaining()) throw ModelFormatError("model file is truncated");
            items *= d;
        }
        if (items > in.remaining() / 4) throw ModelFormatError("model file is truncated");
        Tensor value(shape);
        for (auto& v : value.data) v = static_cast<real>(std::bit_cast<float>(in.get<std::uint32_t>()));
        tensors.emplace(std::move(name), std::move(value));
    }
    if (!in.done()) throw ModelFormatError("trailing bytes after tensor table");

    CompletionModel model;
    try {
        model = CompletionModel::from_artifacts(model_config_from_json(header.at("config")), header.at("artifacts"));
    } catch (const nlohmann::json::exception& e) {
        throw ModelFormatError(std::string("corrupt model header: ") + e.what());
    }
    const auto params = model.parameters();
    if (params.size() != tensors.size()) {
        throw ModelFormatError("model file has " + std::to_string(tensors.size()) + " tensors, configuration needs " +
                               std::to_string(params.size()));
    }
    for (const auto& [name, p] : params) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw ModelFormatError("model file lacks tensor '" + name + "'");
        if (it->second.shape != p->value.shape) throw ModelFormatError("tensor '" + name + "' has the wrong shape");
        p->value = std::move(it->second);
    }
    return model;
}

void save_model(const CompletionModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_model(model));
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    return {deserialize_model(bytes), model_id(bytes), bytes.size()};
}

std::string model_id(std::string_view bytes) { return md5_hex(bytes).substr(0, 12); }

CODECOMP_NN_END
