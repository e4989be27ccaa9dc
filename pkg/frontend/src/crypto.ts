// Client-side keys and record envelopes, byte-compatible with the node.
//
// One 32-byte master seed derives an Ed25519 signing key and an X25519
// agreement key (HKDF-SHA256 with fixed info strings). The public identity
// is the 64-byte concatenation of both public halves; an address is 0x plus
// the first 20 bytes of SHA-256 over it. Records are sealed with a random
// AES-256-GCM content key, wrapped per recipient via ephemeral X25519 +
// HKDF bound to the recipient address.

import { bytesToHex, concatBytes, hexToBytes, utf8 } from "./hex.js";

const subtle = globalThis.crypto.subtle;

const SIGN_INFO = utf8("medledger/sign/v1");
const WRAP_INFO = utf8("medledger/wrap/v1");
const KEK_INFO_PREFIX = "medledger/kek/v1/";

// PKCS#8 wrappers for raw 32-byte OKP private keys
const ED25519_PKCS8_PREFIX = hexToBytes("302e020100300506032b657004220420");
const X25519_PKCS8_PREFIX = hexToBytes("302e020100300506032b656e04220420");

export class NotARecipient extends Error {}
export class CiphertextTampered extends Error {}

export interface WrappedKeyDict {
  epk: string;
  nonce: string;
  ct: string;
}

export interface EnvelopeDict {
  ciphertext: string;
  wrapped_keys: Record<string, WrappedKeyDict>;
  plaintext_digest: string;
  nonce_material: string;
}

export interface KeyPair {
  seed: Uint8Array;
  publicKey: Uint8Array; // 64 bytes
  address: string;
  signingKey: CryptoKey;
  agreementKey: CryptoKey;
}

export async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await subtle.digest("SHA-256", data as BufferSource));
}

async function hkdf(master: Uint8Array, info: Uint8Array): Promise<Uint8Array> {
  const key = await subtle.importKey("raw", master as BufferSource, "HKDF", false, [
    "deriveBits",
  ]);
  const bits = await subtle.deriveBits(
    { name: "HKDF", hash: "SHA-256", salt: new Uint8Array(32), info: info as BufferSource },
    key,
    256,
  );
  return new Uint8Array(bits);
}

function base64urlToBytes(b64: string): Uint8Array {
  const padded = b64.replace(/-/g, "+").replace(/_/g, "/");
  const binary = atob(padded);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}

async function importPrivate(
  algorithm: "Ed25519" | "X25519",
  rawSeed: Uint8Array,
  usages: KeyUsage[],
): Promise<{ key: CryptoKey; publicRaw: Uint8Array }> {
  const prefix = algorithm === "Ed25519" ? ED25519_PKCS8_PREFIX : X25519_PKCS8_PREFIX;
  const pkcs8 = concatBytes(prefix, rawSeed);
  const key = await subtle.importKey("pkcs8", pkcs8 as BufferSource, { name: algorithm }, true, usages);
  const jwk = await subtle.exportKey("jwk", key);
  if (!jwk.x) throw new Error("runtime cannot derive the public half");
  return { key, publicRaw: base64urlToBytes(jwk.x) };
}

async function importPublic(
  algorithm: "Ed25519" | "X25519",
  raw: Uint8Array,
  usages: KeyUsage[],
): Promise<CryptoKey> {
  return subtle.importKey("raw", raw as BufferSource, { name: algorithm }, true, usages);
}

export function addressOf(publicKey: Uint8Array, digest: Uint8Array): string {
  if (publicKey.length !== 64) throw new Error("public key must be 64 bytes");
  return "0x" + bytesToHex(digest.slice(0, 20));
}

export async function keyPairFromSeed(seed: Uint8Array): Promise<KeyPair> {
  if (seed.length !== 32) throw new Error("seed must be exactly 32 bytes");
  const signSeed = await hkdf(seed, SIGN_INFO);
  const wrapSeed = await hkdf(seed, WRAP_INFO);
  const signing = await importPrivate("Ed25519", signSeed, ["sign"]);
  const agreement = await importPrivate("X25519", wrapSeed, ["deriveBits"]);
  const publicKey = concatBytes(signing.publicRaw, agreement.publicRaw);
  const digest = await sha256(publicKey);
  return {
    seed,
    publicKey,
    address: addressOf(publicKey, digest),
    signingKey: signing.key,
    agreementKey: agreement.key,
  };
}

export async function generateKeyPair(): Promise<KeyPair> {
  const seed = new Uint8Array(32);
  globalThis.crypto.getRandomValues(seed);
  return keyPairFromSeed(seed);
}

export async function sign(keypair: KeyPair, message: Uint8Array): Promise<Uint8Array> {
  const sig = await subtle.sign({ name: "Ed25519" }, keypair.signingKey, message as BufferSource);
  return new Uint8Array(sig);
}

export async function verify(
  publicKey: Uint8Array,
  message: Uint8Array,
  signature: Uint8Array,
): Promise<boolean> {
  if (publicKey.length !== 64) return false;
  const key = await importPublic("Ed25519", publicKey.slice(0, 32), ["verify"]);
  return subtle.verify({ name: "Ed25519" }, key, signature as BufferSource, message as BufferSource);
}

async function kekFor(address: string, shared: Uint8Array): Promise<CryptoKey> {
  const kek = await hkdf(shared, utf8(KEK_INFO_PREFIX + address));
  return subtle.importKey("raw", kek as BufferSource, { name: "AES-GCM" }, false, [
    "encrypt",
    "decrypt",
  ]);
}

export async function sealEnvelope(
  plaintext: Uint8Array,
  recipients: Uint8Array[],
): Promise<EnvelopeDict> {
  if (recipients.length === 0) throw new Error("recipient list must not be empty");
  const contentKeyRaw = new Uint8Array(32);
  globalThis.crypto.getRandomValues(contentKeyRaw);
  const contentKey = await subtle.importKey(
    "raw",
    contentKeyRaw as BufferSource,
    { name: "AES-GCM" },
    false,
    ["encrypt"],
  );
  const nonce = new Uint8Array(12);
  globalThis.crypto.getRandomValues(nonce);
  const ciphertext = new Uint8Array(
    await subtle.encrypt({ name: "AES-GCM", iv: nonce as BufferSource }, contentKey, plaintext as BufferSource),
  );

  const wrapped: Record<string, WrappedKeyDict> = {};
  for (const recipient of recipients) {
    const address = addressOf(recipient, await sha256(recipient));
    const recipientX = await importPublic("X25519", recipient.slice(32), []);
    const eph = (await subtle.generateKey({ name: "X25519" }, true, [
      "deriveBits",
    ])) as CryptoKeyPair;
    const kek = await kekFor(address, await x25519Shared(eph.privateKey, recipientX));
    const wrapNonce = new Uint8Array(12);
    globalThis.crypto.getRandomValues(wrapNonce);
    const ct = new Uint8Array(
      await subtle.encrypt({ name: "AES-GCM", iv: wrapNonce as BufferSource }, kek, contentKeyRaw as BufferSource),
    );
    const ephRaw = new Uint8Array(await subtle.exportKey("raw", eph.publicKey));
    wrapped[address] = {
      epk: bytesToHex(ephRaw),
      nonce: bytesToHex(wrapNonce),
      ct: bytesToHex(ct),
    };
  }
  return {
    ciphertext: bytesToHex(ciphertext),
    wrapped_keys: wrapped,
    plaintext_digest: bytesToHex(await sha256(plaintext)),
    nonce_material: bytesToHex(nonce),
  };
}

async function x25519Shared(privateKey: CryptoKey, publicKey: CryptoKey): Promise<Uint8Array> {
  return new Uint8Array(
    await subtle.deriveBits({ name: "X25519", public: publicKey }, privateKey, 256),
  );
}

export async function openEnvelope(
  envelope: EnvelopeDict,
  keypair: KeyPair,
): Promise<Uint8Array> {
  const wrap = envelope.wrapped_keys[keypair.address];
  if (!wrap) throw new NotARecipient(`${keypair.address} holds no wrapped key`);
  const eph = await importPublic("X25519", hexToBytes(wrap.epk), []);
  const shared = await x25519Shared(keypair.agreementKey, eph);
  const kek = await kekFor(keypair.address, shared);
  let contentKeyRaw: Uint8Array;
  try {
    contentKeyRaw = new Uint8Array(
      await subtle.decrypt(
        { name: "AES-GCM", iv: hexToBytes(wrap.nonce) as BufferSource },
        kek,
        hexToBytes(wrap.ct) as BufferSource,
      ),
    );
  } catch {
    throw new CiphertextTampered("wrapped key failed authentication");
  }
  const contentKey = await subtle.importKey(
    "raw",
    contentKeyRaw as BufferSource,
    { name: "AES-GCM" },
    false,
    ["decrypt"],
  );
  try {
    return new Uint8Array(
      await subtle.decrypt(
        { name: "AES-GCM", iv: hexToBytes(envelope.nonce_material) as BufferSource },
        contentKey,
        hexToBytes(envelope.ciphertext) as BufferSource,
      ),
    );
  } catch {
    throw new CiphertextTampered("ciphertext failed authentication");
  }
}
