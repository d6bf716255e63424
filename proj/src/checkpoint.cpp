// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/checkpoint.hpp"

#include "liftrefine/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace liftrefine {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'T', 'N'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
        bits = std::bit_cast<std::uint64_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        if constexpr (std::is_same_v<T, double>) {
            return std::bit_cast<double>(bits);
        } else {
            return static_cast<T>(bits);
        }
    }

    std::string string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw ValueError("tensor container: truncated data");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_tensors(const ParameterList& tensors) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
        for (auto d : tensor.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        for (double v : tensor.data()) put_le<double>(out, v);
    }
    return out;
}

ParameterList decode_tensors(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw ValueError("tensor container: bad magic");
    }
    Reader r(bytes);
    r.string(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw ValueError("tensor container: unsupported version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>();
    ParameterList out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get<std::uint32_t>();
        std::string name = r.string(name_len);
        const auto rank = r.get<std::uint32_t>();
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(r.get<std::uint64_t>()));
        std::vector<double> values(static_cast<std::size_t>(numel_of(shape)));
        for (auto& v : values) v = r.get<double>();
        out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
    }
    if (!r.done()) throw ValueError("tensor container: trailing bytes");
    return out;
}

void save_tensors(const std::filesystem::path& path, const ParameterList& tensors) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto bytes = encode_tensors(tensors);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ParameterList load_tensors(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValueError("cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_tensors(bytes);
}

void assign_tensors(ParameterList& target, const ParameterList& source) {
    std::unordered_map<std::string, const Tensor*> index;
    for (const auto& s : source) index[s.name] = &s.tensor;
    for (auto& t : target) {
        auto it = index.find(t.name);
        if (it == index.end()) throw ValueError("checkpoint: missing tensor '" + t.name + "'");
        if (it->second->shape() != t.tensor.shape()) {
            throw ShapeError("checkpoint: tensor '" + t.name + "' has shape " + shape_str(it->second->shape()) +
                             ", expected " + shape_str(t.tensor.shape()));
        }
        auto dst = t.tensor.mutable_data();
        const auto src = it->second->data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

const Tensor& find_tensor(const ParameterList& tensors, const std::string& name) {
    for (const auto& t : tensors) {
        if (t.name == name) return t.tensor;
    }
    throw ValueError("tensor container: no tensor named '" + name + "'");
}

} // namespace liftrefine
