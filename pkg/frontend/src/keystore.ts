// Encrypted identity storage. The master seed lives in browser storage only
// as an AES-GCM blob under a PBKDF2-stretched passphrase; the passphrase and
// the unlocked key exist in memory only and nothing here ever touches the
// network.

import { KeyPair, keyPairFromSeed } from "./crypto.js";
import { bytesToHex, hexToBytes, utf8 } from "./hex.js";

const STORAGE_KEY = "medledger.identity";
const PBKDF2_ITERATIONS = 120_000;

const subtle = globalThis.crypto.subtle;

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class WrongPassphrase extends Error {}
export class NoStoredIdentity extends Error {}

async function passphraseKey(passphrase: string, salt: Uint8Array): Promise<CryptoKey> {
  const material = await subtle.importKey("raw", utf8(passphrase) as BufferSource, "PBKDF2", false, [
    "deriveKey",
  ]);
  return subtle.deriveKey(
    { name: "PBKDF2", hash: "SHA-256", salt: salt as BufferSource, iterations: PBKDF2_ITERATIONS },
    material,
    { name: "AES-GCM", length: 256 },
    false,
    ["encrypt", "decrypt"],
  );
}

export async function saveIdentity(
  store: KeyValueStore,
  seed: Uint8Array,
  passphrase: string,
): Promise<void> {
  const salt = new Uint8Array(16);
  globalThis.crypto.getRandomValues(salt);
  const nonce = new Uint8Array(12);
  globalThis.crypto.getRandomValues(nonce);
  const key = await passphraseKey(passphrase, salt);
  const ciphertext = new Uint8Array(
    await subtle.encrypt({ name: "AES-GCM", iv: nonce as BufferSource }, key, seed as BufferSource),
  );
  store.setItem(
    STORAGE_KEY,
    JSON.stringify({
      salt: bytesToHex(salt),
      nonce: bytesToHex(nonce),
      ct: bytesToHex(ciphertext),
    }),
  );
}

export function hasIdentity(store: KeyValueStore): boolean {
  return store.getItem(STORAGE_KEY) !== null;
}

export function forgetIdentity(store: KeyValueStore): void {
  store.removeItem(STORAGE_KEY);
}

export async function unlockIdentity(
  store: KeyValueStore,
  passphrase: string,
): Promise<KeyPair> {
  const raw = store.getItem(STORAGE_KEY);
  if (raw === null) throw new NoStoredIdentity("no identity saved in this browser");
  const blob = JSON.parse(raw) as { salt: string; nonce: string; ct: string };
  const key = await passphraseKey(passphrase, hexToBytes(blob.salt));
  let seed: Uint8Array;
  try {
    seed = new Uint8Array(
      await subtle.decrypt(
        { name: "AES-GCM", iv: hexToBytes(blob.nonce) as BufferSource },
        key,
        hexToBytes(blob.ct) as BufferSource,
      ),
    );
  } catch {
    throw new WrongPassphrase("passphrase does not unlock the stored identity");
  }
  return keyPairFromSeed(seed);
}
