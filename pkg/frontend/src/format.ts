/** Verbatim rendering of server-provided values.
 *
 * Every numeric shown in the UI comes straight from a service response
 * field; nothing is recomputed or rounded client-side, so the rendered
 * text is byte-identical to the JSON value the server sent.
 */

export function verbatim(value: number | string | null | undefined): string {
  if (value === null || value === undefined) {
    return "—";
  }
  return String(value);
}

/** Percent label that preserves the raw fraction alongside it. */
export function fractionLabel(value: number | null | undefined): string {
  return verbatim(value ?? null);
}
