#include "wsec/soap/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/provider.h>
#include <openssl/rand.h>
#include <openssl/sha.h>
#include <sodium.h>

#include <cctype>
#include <mutex>
#include <stdexcept>

namespace wsec::soap {

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
std::string to_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

std::string hex_colon(const Bytes& b) {
    static const char* digits = "0123456789ABCDEF";
    std::string out;
    out.reserve(b.size() * 3);
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (i) out += ':';
        out += digits[b[i] >> 4];
        out += digits[b[i] & 15];
    }
    return out;
}

std::optional<Bytes> parse_hex_colon(std::string_view s) {
    Bytes out;
    auto val = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    };
    skip_ws();
    if (i == s.size()) return out;
    for (;;) {
        if (i + 1 >= s.size()) return std::nullopt;
        int hi = val(s[i]), lo = val(s[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
        i += 2;
        skip_ws();
        if (i == s.size()) return out;
        if (s[i] != ':') return std::nullopt;
        ++i;
        skip_ws();
    }
}

// ---- randomness ----

std::string Rng::nonce() {
    Bytes b = bytes(16);
    unsigned __int128 v = 0;
    for (auto x : b) v = (v << 8) | x;
    if (v == 0) return "0";
    std::string out;
    while (v) {
        out += static_cast<char>('0' + static_cast<int>(v % 10));
        v /= 10;
    }
    return std::string(out.rbegin(), out.rend());
}

Bytes SystemRng::bytes(std::size_t n) {
    Bytes out(n);
    if (n && RAND_bytes(out.data(), static_cast<int>(n)) != 1) throw std::runtime_error("RAND_bytes failed");
    return out;
}

PinnedRng::PinnedRng(std::vector<std::string> nonces, std::uint64_t seed) : nonces_(std::move(nonces)), state_(seed) {}

Bytes PinnedRng::bytes(std::size_t n) {
    Bytes out;
    while (out.size() < n) {
        // splitmix64
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        z ^= z >> 31;
        for (int i = 0; i < 8 && out.size() < n; ++i) out.push_back(static_cast<std::uint8_t>(z >> (8 * i)));
    }
    return out;
}

std::string PinnedRng::nonce() {
    if (next_ < nonces_.size()) return nonces_[next_++];
    return std::to_string(1000 + next_++);
}

// ---- symmetric suites ----

bool SymmetricSuite::verify(const Bytes& key, const Bytes& data, const Bytes& tag) const {
    Bytes expect = mac(key, data);
    return expect.size() == tag.size() && CRYPTO_memcmp(expect.data(), tag.data(), tag.size()) == 0;
}

namespace {

Bytes hmac(const EVP_MD* md, const Bytes& key, const Bytes& data) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!HMAC(md, key.data(), static_cast<int>(key.size()), data.data(), data.size(), out, &len))
        throw std::runtime_error("HMAC failed");
    return Bytes(out, out + len);
}

struct CipherCtx {
    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    ~CipherCtx() { EVP_CIPHER_CTX_free(ctx); }
};

const EVP_CIPHER* rc2_cbc() {
    static const EVP_CIPHER* cipher = [] {
        OSSL_PROVIDER_load(nullptr, "legacy");
        OSSL_PROVIDER_load(nullptr, "default");
        return EVP_CIPHER_fetch(nullptr, "RC2-CBC", nullptr);
    }();
    if (!cipher) throw std::runtime_error("RC2 is unavailable (OpenSSL legacy provider not found)");
    return cipher;
}

class ModernSuite : public SymmetricSuite {
public:
    std::string_view name() const override { return "modern"; }
    std::size_t key_size() const override { return 32; }
    Bytes mac(const Bytes& key, const Bytes& data) const override { return hmac(EVP_sha256(), key, data); }

    Bytes seal(const Bytes& key, const Bytes& plain, Rng& rng) const override {
        Bytes iv = rng.bytes(12);
        CipherCtx c;
        Bytes out(iv);
        out.resize(12 + plain.size() + 16);
        int len = 0;
        if (EVP_EncryptInit_ex(c.ctx, EVP_aes_256_gcm(), nullptr, key.data(), iv.data()) != 1 ||
            EVP_EncryptUpdate(c.ctx, out.data() + 12, &len, plain.data(), static_cast<int>(plain.size())) != 1 ||
            EVP_EncryptFinal_ex(c.ctx, out.data() + 12 + len, &len) != 1 ||
            EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_GET_TAG, 16, out.data() + 12 + plain.size()) != 1)
            throw std::runtime_error("AES-GCM encryption failed");
        return out;
    }

    std::optional<Bytes> open(const Bytes& key, const Bytes& cipher) const override {
        if (cipher.size() < 28 || key.size() != 32) return std::nullopt;
        std::size_t n = cipher.size() - 28;
        Bytes out(n);
        CipherCtx c;
        int len = 0;
        Bytes tag(cipher.end() - 16, cipher.end());
        if (EVP_DecryptInit_ex(c.ctx, EVP_aes_256_gcm(), nullptr, key.data(), cipher.data()) != 1 ||
            EVP_DecryptUpdate(c.ctx, out.data(), &len, cipher.data() + 12, static_cast<int>(n)) != 1 ||
            EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_GCM_SET_TAG, 16, tag.data()) != 1 ||
            EVP_DecryptFinal_ex(c.ctx, out.data() + len, &len) != 1)
            return std::nullopt;
        return out;
    }
};

class PaperCompatSuite : public SymmetricSuite {
public:
    std::string_view name() const override { return "paper-compat"; }
    std::size_t key_size() const override { return 16; }
    Bytes mac(const Bytes& key, const Bytes& data) const override { return hmac(EVP_sha1(), key, data); }

    Bytes seal(const Bytes& key, const Bytes& plain, Rng& rng) const override {
        Bytes iv = rng.bytes(8);
        CipherCtx c;
        Bytes out(iv);
        out.resize(8 + plain.size() + 8);
        int len = 0, fin = 0;
        if (EVP_EncryptInit_ex(c.ctx, rc2_cbc(), nullptr, nullptr, nullptr) != 1 ||
            EVP_CIPHER_CTX_set_key_length(c.ctx, static_cast<int>(key.size())) != 1 ||
            EVP_EncryptInit_ex(c.ctx, nullptr, nullptr, key.data(), iv.data()) != 1 ||
            EVP_EncryptUpdate(c.ctx, out.data() + 8, &len, plain.data(), static_cast<int>(plain.size())) != 1 ||
            EVP_EncryptFinal_ex(c.ctx, out.data() + 8 + len, &fin) != 1)
            throw std::runtime_error("RC2 encryption failed");
        out.resize(8 + len + fin);
        return out;
    }

    std::optional<Bytes> open(const Bytes& key, const Bytes& cipher) const override {
        if (cipher.size() < 16 || (cipher.size() - 8) % 8 != 0) return std::nullopt;
        Bytes out(cipher.size());
        CipherCtx c;
        int len = 0, fin = 0;
        if (EVP_DecryptInit_ex(c.ctx, rc2_cbc(), nullptr, nullptr, nullptr) != 1 ||
            EVP_CIPHER_CTX_set_key_length(c.ctx, static_cast<int>(key.size())) != 1 ||
            EVP_DecryptInit_ex(c.ctx, nullptr, nullptr, key.data(), cipher.data()) != 1 ||
            EVP_DecryptUpdate(c.ctx, out.data(), &len, cipher.data() + 8, static_cast<int>(cipher.size() - 8)) != 1 ||
            EVP_DecryptFinal_ex(c.ctx, out.data() + len, &fin) != 1)
            return std::nullopt;
        out.resize(len + fin);
        return out;
    }
};

void sodium_ready() {
    static const int ok = sodium_init();
    if (ok < 0) throw std::runtime_error("libsodium failed to initialize");
}

} // namespace

std::unique_ptr<SymmetricSuite> modern_suite() { return std::make_unique<ModernSuite>(); }
std::unique_ptr<SymmetricSuite> paper_compat_suite() { return std::make_unique<PaperCompatSuite>(); }

std::unique_ptr<SymmetricSuite> suite_by_name(std::string_view name) {
    if (name == "modern") return modern_suite();
    if (name == "paper-compat") return paper_compat_suite();
    throw std::invalid_argument("unknown crypto suite " + std::string(name) + " (modern, paper-compat)");
}

Bytes sha256(const Bytes& data) {
    Bytes out(SHA256_DIGEST_LENGTH);
    SHA256(data.data(), data.size(), out.data());
    return out;
}

// ---- public key ----

SigningKeys signing_keys_from_seed(const Bytes& seed32) {
    sodium_ready();
    if (seed32.size() != crypto_sign_SEEDBYTES) throw std::invalid_argument("signing seed must be 32 bytes");
    SigningKeys k{Bytes(crypto_sign_PUBLICKEYBYTES), Bytes(crypto_sign_SECRETKEYBYTES)};
    crypto_sign_seed_keypair(k.public_key.data(), k.secret_key.data(), seed32.data());
    return k;
}

BoxKeys box_keys_from_seed(const Bytes& seed32) {
    sodium_ready();
    if (seed32.size() != crypto_box_SEEDBYTES) throw std::invalid_argument("box seed must be 32 bytes");
    BoxKeys k{Bytes(crypto_box_PUBLICKEYBYTES), Bytes(crypto_box_SECRETKEYBYTES)};
    crypto_box_seed_keypair(k.public_key.data(), k.secret_key.data(), seed32.data());
    return k;
}

Bytes sign_detached(const Bytes& msg, const SigningKeys& k) {
    sodium_ready();
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(), k.secret_key.data());
    return sig;
}

bool verify_detached(const Bytes& msg, const Bytes& sig, const Bytes& public_key) {
    sodium_ready();
    if (sig.size() != crypto_sign_BYTES || public_key.size() != crypto_sign_PUBLICKEYBYTES) return false;
    return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(), public_key.data()) == 0;
}

Bytes seal_box(const Bytes& msg, const Bytes& public_key) {
    sodium_ready();
    Bytes out(msg.size() + crypto_box_SEALBYTES);
    if (public_key.size() != crypto_box_PUBLICKEYBYTES ||
        crypto_box_seal(out.data(), msg.data(), msg.size(), public_key.data()) != 0)
        throw std::runtime_error("sealing failed");
    return out;
}

std::optional<Bytes> open_box(const Bytes& cipher, const BoxKeys& k) {
    sodium_ready();
    if (cipher.size() < crypto_box_SEALBYTES) return std::nullopt;
    Bytes out(cipher.size() - crypto_box_SEALBYTES);
    if (crypto_box_seal_open(out.data(), cipher.data(), cipher.size(), k.public_key.data(), k.secret_key.data()) != 0)
        return std::nullopt;
    return out;
}

Bytes Certificate::signed_part() const {
    Bytes out = to_bytes("cert|" + subject + "|");
    out.insert(out.end(), public_key.begin(), public_key.end());
    return out;
}

Bytes Certificate::encode() const {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(subject.size() >> 8));
    out.push_back(static_cast<std::uint8_t>(subject.size() & 0xFF));
    out.insert(out.end(), subject.begin(), subject.end());
    out.insert(out.end(), public_key.begin(), public_key.end());
    out.insert(out.end(), signature.begin(), signature.end());
    return out;
}

std::optional<Certificate> Certificate::decode(const Bytes& b) {
    if (b.size() < 2) return std::nullopt;
    std::size_t n = (std::size_t(b[0]) << 8) | b[1];
    if (b.size() != 2 + n + 32 + 64) return std::nullopt;
    Certificate c;
    c.subject.assign(b.begin() + 2, b.begin() + 2 + static_cast<std::ptrdiff_t>(n));
    c.public_key.assign(b.begin() + 2 + static_cast<std::ptrdiff_t>(n), b.begin() + 2 + static_cast<std::ptrdiff_t>(n) + 32);
    c.signature.assign(b.end() - 64, b.end());
    return c;
}

Certificate issue_certificate(const std::string& subject, const Bytes& public_key, const SigningKeys& ca) {
    Certificate c{subject, public_key, {}};
    c.signature = sign_detached(c.signed_part(), ca);
    return c;
}

bool check_certificate(const Certificate& c, const Bytes& ca_public_key) {
    return verify_detached(c.signed_part(), c.signature, ca_public_key);
}

// ---- key store ----

void KeyStore::set_shared(const std::string& client, const std::string& server, Bytes key) {
    shared_[{client, server}] = std::move(key);
}

const Bytes* KeyStore::shared(const std::string& client, const std::string& server) const {
    auto it = shared_.find({client, server});
    return it == shared_.end() ? nullptr : &it->second;
}

void KeyStore::add_principal(const std::string& p, SigningKeys sig, BoxKeys box) {
    principals_[p] = {std::move(sig), std::move(box)};
}

const SigningKeys* KeyStore::signing(const std::string& p) const {
    auto it = principals_.find(p);
    return it == principals_.end() ? nullptr : &it->second.first;
}

const BoxKeys* KeyStore::box(const std::string& p) const {
    auto it = principals_.find(p);
    return it == principals_.end() ? nullptr : &it->second.second;
}

Certificate KeyStore::signing_certificate(const std::string& p) const {
    const SigningKeys* k = signing(p);
    if (!k) throw std::invalid_argument("no key pair for " + p);
    return issue_certificate(p, k->public_key, ca_);
}

Certificate KeyStore::box_certificate(const std::string& p) const {
    const BoxKeys* k = box(p);
    if (!k) throw std::invalid_argument("no key pair for " + p);
    return issue_certificate(p, k->public_key, ca_);
}

KeyStore KeyStore::derived(const std::vector<std::string>& principals, std::size_t shared_key_size,
                           std::string_view label) {
    auto derive = [&](const std::string& what) { return sha256(to_bytes(std::string(label) + "|" + what)); };
    KeyStore ks;
    for (const auto& p : principals)
        for (const auto& q : principals) {
            Bytes k = derive("K_" + p + "_" + q);
            while (k.size() < shared_key_size) {
                Bytes more = sha256(k);
                k.insert(k.end(), more.begin(), more.end());
            }
            k.resize(shared_key_size);
            ks.set_shared(p, q, std::move(k));
        }
    ks.set_ca(signing_keys_from_seed(derive("CA")));
    for (const auto& p : principals)
        ks.add_principal(p, signing_keys_from_seed(derive("SK_" + p)), box_keys_from_seed(derive("DK_" + p)));
    return ks;
}

} // namespace wsec::soap
