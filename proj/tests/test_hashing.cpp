#include <doctest.h>

#include "morphdet/hashing.hpp"

using namespace morphdet;

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex(std::string("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex(std::string(
              "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 incremental equals one-shot") {
    Sha256 h;
    h.update(std::string("hello "));
    h.update(std::string("world"));
    CHECK(h.hex_digest() == sha256_hex(std::string("hello world")));
}

TEST_CASE("derive_seed is deterministic and stream-dependent") {
    CHECK(derive_seed(7, "a") == derive_seed(7, "a"));
    CHECK(derive_seed(7, "a") != derive_seed(7, "b"));
    CHECK(derive_seed(7, "a") != derive_seed(8, "a"));
}
