// Headless flow logic per role. The DOM layer renders whatever these
// return; scripted tests drive them directly against a live node.

import { ApiClient, ApiResult, Receipt } from "./api.js";
import * as cmd from "./commands.js";
import {
  EnvelopeDict,
  KeyPair,
  generateKeyPair,
  openEnvelope,
  sealEnvelope,
} from "./crypto.js";
import { hexToBytes, utf8 } from "./hex.js";
import {
  KeyValueStore,
  saveIdentity,
  unlockIdentity,
} from "./keystore.js";
import { Role } from "./nav.js";

export interface Account {
  address: string;
  role: Role;
  status: "pending" | "active" | "inactive";
  profile: Record<string, string>;
  next_nonce: number;
}

export interface Appointment {
  id: number;
  patient: string;
  doctor: string;
  date: string;
  slot: number;
  status: string;
  notes: string;
  prescription_ids: number[];
}

export interface Medication {
  id: number;
  name: string;
  form: string;
  strength: string;
}

export interface LabParameter {
  id: number;
  name: string;
  unit: string;
  low: number;
  high: number;
}

export interface LabResult {
  id: number;
  patient: string;
  parameter_id: number;
  value: number;
  flagged: boolean;
}

export interface SealedRecordEntry {
  id: number;
  patient: string;
  author: string;
  record_kind: string;
  created_at: number;
  envelope: EnvelopeDict;
}

export type LoginOutcome =
  | { state: "active"; role: Role }
  | { state: "awaiting-activation" }
  | { state: "failed"; reason: string };

export class AuthFlow {
  constructor(
    private readonly api: ApiClient,
    private readonly store: KeyValueStore,
  ) {}

  /** Generate a key in the browser, encrypt it at rest, and register. */
  async createIdentity(
    passphrase: string,
    role: "patient" | "doctor",
    profile: Record<string, string>,
  ): Promise<{ keypair: KeyPair; receipt: ApiResult<Receipt> }> {
    const keypair = await generateKeyPair();
    await saveIdentity(this.store, keypair.seed, passphrase);
    const receipt = await this.api.submitAndWait(
      keypair,
      0,
      cmd.registerUser(keypair.publicKey, role, profile),
    );
    return { keypair, receipt };
  }

  /** Local unlock only; a wrong passphrase never causes a network call. */
  unlock(passphrase: string): Promise<KeyPair> {
    return unlockIdentity(this.store, passphrase);
  }

  async login(keypair: KeyPair): Promise<LoginOutcome> {
    const session = await this.api.login(keypair);
    if (!session.ok) return { state: "failed", reason: session.error.error };
    const me = await this.api.get<Account>("/me");
    if (me.ok) return { state: "active", role: me.data.role };
    if (me.error.error === "Inactive") return { state: "awaiting-activation" };
    return { state: "failed", reason: me.error.error };
  }
}

class PortalBase {
  constructor(
    protected readonly api: ApiClient,
    protected readonly keypair: KeyPair,
  ) {}

  protected async nextNonce(): Promise<number> {
    const me = await this.api.get<Account>("/me");
    if (!me.ok) throw new Error(`cannot fetch account: ${me.error.error}`);
    return me.data.next_nonce;
  }

  protected async send(command: cmd.Command): Promise<ApiResult<Receipt>> {
    return this.api.submitAndWait(this.keypair, await this.nextNonce(), command);
  }

  me(): Promise<ApiResult<Account>> {
    return this.api.get("/me");
  }

  updateProfile(profile: Record<string, string>): Promise<ApiResult<Receipt>> {
    return this.send(cmd.updateProfile(profile));
  }

  audit(): Promise<ApiResult<{ audit: unknown[] }>> {
    return this.api.get("/audit");
  }

  medications(): Promise<ApiResult<{ medications: Medication[] }>> {
    return this.api.get("/admin/medications");
  }

  labParameters(): Promise<ApiResult<{ lab_parameters: LabParameter[] }>> {
    return this.api.get("/admin/lab-parameters");
  }
}

export type BookingOutcome =
  | { result: "booked"; receipt: Receipt }
  | { result: "slot-taken"; refreshedSlots: number[] }
  | { result: "failed"; reason: string };

export class PatientPortal extends PortalBase {
  freeSlots(doctor: string, date: string): Promise<ApiResult<{ free_slots: number[] }>> {
    return this.api.get(`/doctors/${doctor}/slots?date=${encodeURIComponent(date)}`);
  }

  /** Book a slot; on a lost race the refreshed grid comes back with the
   * failure so the view can redraw immediately. */
  async book(doctor: string, date: string, slot: number): Promise<BookingOutcome> {
    const submitted = await this.send(cmd.requestAppointment(doctor, date, slot));
    if (!submitted.ok) {
      if (submitted.error.error === "SlotTaken") {
        const refreshed = await this.freeSlots(doctor, date);
        return {
          result: "slot-taken",
          refreshedSlots: refreshed.ok ? refreshed.data.free_slots : [],
        };
      }
      return { result: "failed", reason: submitted.error.error };
    }
    if (submitted.data.outcome === "deny") {
      if (submitted.data.reason === "SlotTaken") {
        const refreshed = await this.freeSlots(doctor, date);
        return {
          result: "slot-taken",
          refreshedSlots: refreshed.ok ? refreshed.data.free_slots : [],
        };
      }
      return { result: "failed", reason: submitted.data.reason ?? "denied" };
    }
    return { result: "booked", receipt: submitted.data };
  }

  appointments(): Promise<ApiResult<{ appointments: Appointment[] }>> {
    return this.api.get("/appointments");
  }

  prescriptions(): Promise<ApiResult<{ prescriptions: unknown[] }>> {
    return this.api.get("/prescriptions");
  }

  labResults(): Promise<ApiResult<{ lab_results: LabResult[] }>> {
    return this.api.get("/lab-results");
  }

  grantConsent(doctor: string): Promise<ApiResult<Receipt>> {
    return this.send(cmd.grantAccess(doctor));
  }

  revokeConsent(doctor: string): Promise<ApiResult<Receipt>> {
    return this.send(cmd.revokeAccess(doctor));
  }

  async records(): Promise<ApiResult<{ records: SealedRecordEntry[] }>> {
    return this.api.get(`/patients/${this.keypair.address}/records`);
  }

  /** Decrypt in memory; plaintext never persists anywhere. */
  async decryptRecord(entry: SealedRecordEntry): Promise<string> {
    const plaintext = await openEnvelope(entry.envelope, this.keypair);
    return new TextDecoder().decode(plaintext);
  }
}

export class DoctorPortal extends PortalBase {
  appointments(): Promise<ApiResult<{ appointments: Appointment[] }>> {
    return this.api.get("/appointments");
  }

  freeSlots(date: string): Promise<ApiResult<{ free_slots: number[] }>> {
    return this.api.get(
      `/doctors/${this.keypair.address}/slots?date=${encodeURIComponent(date)}`,
    );
  }

  confirm(appointmentId: number): Promise<ApiResult<Receipt>> {
    return this.send(cmd.updateAppointment(appointmentId, "confirm"));
  }

  complete(appointmentId: number): Promise<ApiResult<Receipt>> {
    return this.send(cmd.updateAppointment(appointmentId, "complete"));
  }

  cancel(appointmentId: number): Promise<ApiResult<Receipt>> {
    return this.send(cmd.updateAppointment(appointmentId, "cancel"));
  }

  reschedule(
    appointmentId: number,
    newDate: string,
    newSlot: number,
  ): Promise<ApiResult<Receipt>> {
    return this.send(
      cmd.updateAppointment(appointmentId, "reschedule", {
        newDate,
        newSlot,
      }),
    );
  }

  prescribe(
    appointmentId: number,
    medicationId: number,
    dosage: string,
  ): Promise<ApiResult<Receipt>> {
    return this.send(cmd.prescribe(appointmentId, medicationId, dosage));
  }

  enterLabResult(
    patient: string,
    parameterId: number,
    value: number,
  ): Promise<ApiResult<Receipt>> {
    return this.send(cmd.inputLabResult(patient, parameterId, value));
  }

  patientRecords(patient: string): Promise<ApiResult<{ records: SealedRecordEntry[] }>> {
    return this.api.get(`/patients/${patient}/records`);
  }

  async decryptRecord(entry: SealedRecordEntry): Promise<string> {
    const plaintext = await openEnvelope(entry.envelope, this.keypair);
    return new TextDecoder().decode(plaintext);
  }

  /** Seal a note to the patient and ourselves, then append it on-chain. */
  async appendNote(
    patient: string,
    recordKind: string,
    text: string,
  ): Promise<ApiResult<Receipt>> {
    const key = await this.api.get<{ public_key: string }>(`/accounts/${patient}/key`);
    if (!key.ok) return key;
    const envelope = await sealEnvelope(utf8(text), [
      hexToBytes(key.data.public_key),
      this.keypair.publicKey,
    ]);
    return this.send(cmd.appendRecord(patient, recordKind, envelope));
  }
}

export class AdminPortal extends PortalBase {
  users(): Promise<ApiResult<{ users: Account[] }>> {
    return this.api.get("/admin/users");
  }

  setStatus(target: string, status: "active" | "inactive"): Promise<ApiResult<Receipt>> {
    return this.send(cmd.setUserStatus(target, status));
  }

  addMedication(name: string, form: string, strength: string): Promise<ApiResult<Receipt>> {
    return this.send(cmd.addMedication(name, form, strength));
  }

  addLabParameter(
    name: string,
    unit: string,
    low: number,
    high: number,
  ): Promise<ApiResult<Receipt>> {
    return this.send(cmd.addLabParameter(name, unit, low, high));
  }

  /** Download bytes exactly as the node serves them. */
  exportDataset(
    dataset: "users" | "medications" | "lab_parameters" | "audit",
    format: "csv" | "xml" | "txt",
  ): Promise<ApiResult<Uint8Array>> {
    return this.api.getBytes(`/admin/export?dataset=${dataset}&format=${format}`);
  }
}
