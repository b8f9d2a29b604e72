#include "turbotls/discovery.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

namespace turbotls::discovery {

const char* to_string(RecordError err) {
    switch (err) {
        case RecordError::Malformed: return "malformed";
        case RecordError::UnsortedParams: return "unsorted_params";
        case RecordError::Truncated: return "truncated";
    }
    return "?";
}

namespace {

// DNS wire name: length-prefixed labels, no compression, zero terminator.
bool encode_name(const std::string& name, Bytes& out) {
    if (name.empty()) return false;
    if (name == ".") {
        out.push_back(0);
        return true;
    }
    std::size_t start = 0;
    const std::string normalized =
        name.back() == '.' ? name.substr(0, name.size() - 1) : name;
    if (normalized.empty()) return false;
    if (normalized.size() > 253) return false;
    while (start <= normalized.size()) {
        const std::size_t dot = normalized.find('.', start);
        const std::size_t end = dot == std::string::npos ? normalized.size() : dot;
        const std::size_t len = end - start;
        if (len == 0 || len > 63) return false;
        out.push_back(static_cast<std::uint8_t>(len));
        out.insert(out.end(), normalized.begin() + static_cast<std::ptrdiff_t>(start),
                   normalized.begin() + static_cast<std::ptrdiff_t>(end));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    out.push_back(0);
    return true;
}

Result<std::string, RecordError> decode_name(BytesView data, std::size_t& pos) {
    std::string name;
    std::size_t total = 0;
    while (true) {
        if (pos >= data.size()) return RecordError::Truncated;
        const std::uint8_t len = data[pos++];
        if (len == 0) break;
        if (len > 63) return RecordError::Malformed;  // compression pointers not allowed in SVCB rdata
        if (pos + len > data.size()) return RecordError::Truncated;
        total += len + 1;
        if (total > 255) return RecordError::Malformed;
        if (!name.empty()) name.push_back('.');
        name.append(reinterpret_cast<const char*>(data.data() + pos), len);
        pos += len;
    }
    if (name.empty()) name = ".";
    return name;
}

}  // namespace

Result<Bytes, RecordError> encode_https_rdata(const HttpsRecord& record) {
    Bytes out;
    put_u16be(out, record.priority);
    if (!encode_name(record.target_name, out)) return RecordError::Malformed;

    std::optional<std::uint16_t> previous;
    for (const auto& [key, value] : record.svc_params) {
        if (previous && key <= *previous) return RecordError::UnsortedParams;
        previous = key;
        if (value.size() > 0xffff) return RecordError::Malformed;
        put_u16be(out, key);
        put_u16be(out, static_cast<std::uint16_t>(value.size()));
        out.insert(out.end(), value.begin(), value.end());
    }
    return out;
}

Result<HttpsRecord, RecordError> decode_https_rdata(BytesView rdata) {
    if (rdata.size() < 3) return RecordError::Truncated;  // priority + root name minimum
    HttpsRecord record;
    record.priority = get_u16be(rdata.data());
    std::size_t pos = 2;
    auto name = decode_name(rdata, pos);
    if (!name.ok()) return name.error();
    record.target_name = name.value();

    std::optional<std::uint16_t> previous;
    while (pos < rdata.size()) {
        if (pos + 4 > rdata.size()) return RecordError::Truncated;
        const std::uint16_t key = get_u16be(rdata.data() + pos);
        const std::uint16_t len = get_u16be(rdata.data() + pos + 2);
        pos += 4;
        if (pos + len > rdata.size()) return RecordError::Truncated;
        if (previous && key <= *previous) return RecordError::UnsortedParams;
        previous = key;
        record.svc_params.emplace_back(
            key, Bytes(rdata.begin() + static_cast<std::ptrdiff_t>(pos),
                       rdata.begin() + static_cast<std::ptrdiff_t>(pos + len)));
        pos += len;
    }
    return record;
}

bool supports_turbotls(const HttpsRecord& record) {
    for (const auto& [key, value] : record.svc_params) {
        if (key == kTurboTlsFlagKey) return true;
    }
    return false;
}

void CapabilityCache::store(const std::string& domain, bool supports_turbo, TimePoint now,
                            Duration ttl) {
    std::unique_lock lock(mutex_);
    entries_[domain] = Entry{supports_turbo, now, ttl};
}

std::optional<bool> CapabilityCache::lookup(const std::string& domain, TimePoint now) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(domain);
    if (it == entries_.end()) return std::nullopt;
    if (now - it->second.learned_at > it->second.ttl) return std::nullopt;
    return it->second.supports_turbo;
}

std::size_t CapabilityCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::string CapabilityCache::serialize() const {
    std::shared_lock lock(mutex_);
    std::ostringstream out;
    for (const auto& [domain, entry] : entries_) {
        out << domain << ' ' << (entry.supports_turbo ? 1 : 0) << ' '
            << (entry.learned_at + entry.ttl).count() << '\n';
    }
    return out.str();
}

CapabilityCache CapabilityCache::deserialize(const std::string& text) {
    CapabilityCache cache;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string domain;
        int flag = 0;
        long long expiry_ns = 0;
        if (!(fields >> domain >> flag >> expiry_ns)) continue;  // skip bad lines
        Entry entry;
        entry.supports_turbo = flag != 0;
        entry.learned_at = TimePoint{0};
        entry.ttl = Duration{expiry_ns};
        cache.entries_[domain] = entry;
    }
    return cache;
}

void CapabilityCache::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    out << serialize();
}

CapabilityCache CapabilityCache::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) return CapabilityCache{};
    std::ostringstream text;
    text << in.rdbuf();
    return deserialize(text.str());
}

}  // namespace turbotls::discovery
