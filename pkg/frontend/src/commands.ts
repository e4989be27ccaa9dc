// Transaction command builders; shapes must match what the node's state
// machine decodes.

import { Json } from "./canonical.js";
import { EnvelopeDict } from "./crypto.js";
import { bytesToHex } from "./hex.js";

export type Command = { kind: string } & { [key: string]: Json };

export const registerUser = (
  publicKey: Uint8Array,
  role: "patient" | "doctor" | "admin",
  profile: Record<string, string>,
): Command => ({
  kind: "register_user",
  public_key: bytesToHex(publicKey),
  role,
  profile,
});

export const setUserStatus = (target: string, status: "active" | "inactive"): Command => ({
  kind: "set_user_status",
  target,
  status,
});

export const updateProfile = (profile: Record<string, string>): Command => ({
  kind: "update_profile",
  profile,
});

export const addMedication = (name: string, form: string, strength: string): Command => ({
  kind: "add_medication",
  name,
  form,
  strength,
});

export const addLabParameter = (
  name: string,
  unit: string,
  low: number,
  high: number,
): Command => ({ kind: "add_lab_parameter", name, unit, low, high });

export const requestAppointment = (doctor: string, date: string, slot: number): Command => ({
  kind: "request_appointment",
  doctor,
  date,
  slot,
});

export const updateAppointment = (
  appointmentId: number,
  action: "confirm" | "reschedule" | "complete" | "cancel",
  extra: { newDate?: string; newSlot?: number; notes?: string } = {},
): Command => {
  const cmd: Command = {
    kind: "update_appointment",
    appointment_id: appointmentId,
    action,
  };
  if (extra.newDate !== undefined) cmd.new_date = extra.newDate;
  if (extra.newSlot !== undefined) cmd.new_slot = extra.newSlot;
  if (extra.notes !== undefined) cmd.notes = extra.notes;
  return cmd;
};

export const prescribe = (
  appointmentId: number,
  medicationId: number,
  dosage: string,
): Command => ({
  kind: "prescribe",
  appointment_id: appointmentId,
  medication_id: medicationId,
  dosage,
});

export const inputLabResult = (
  patient: string,
  parameterId: number,
  value: number,
): Command => ({
  kind: "input_lab_result",
  patient,
  parameter_id: parameterId,
  value,
});

export const grantAccess = (doctor: string): Command => ({ kind: "grant_access", doctor });

export const revokeAccess = (doctor: string): Command => ({ kind: "revoke_access", doctor });

export const appendRecord = (
  patient: string,
  recordKind: string,
  envelope: EnvelopeDict,
): Command => ({
  kind: "append_record",
  patient,
  record_kind: recordKind,
  envelope: envelope as unknown as Json,
});
